#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "covidscreen/dataset.hpp"
#include "covidscreen/metrics.hpp"
#include "covidscreen/model.hpp"

namespace covidscreen {

struct TrainingConfig {
    double learning_rate = 0.001;
    int epochs = 30;
    int batch_size = 5;
    std::string optimizer = "adam";
    std::uint64_t seed = 0;

    void validate() const;  // throws on invalid fields

    nlohmann::json to_json() const;
    static TrainingConfig from_json(const nlohmann::json& j);
};

struct EpochTrace {
    std::vector<double> train_accuracy;
    std::vector<double> train_loss;
    std::vector<double> val_accuracy;
    std::vector<double> val_loss;

    std::size_t epochs() const { return train_accuracy.size(); }
};

struct RunRecord {
    std::string run_id;
    std::string dataset_id;
    std::string backbone;
    TrainingConfig config;
    EpochTrace trace;
    MetricReport train_metrics;
    MetricReport test_metrics;
    std::string started;   // ISO-8601 UTC
    std::string finished;

    nlohmann::json to_json() const;
    static RunRecord from_json(const nlohmann::json& j);
};

double cross_entropy(const std::array<double, 2>& probs, int label);

// Trains the classification head in place with Adam (beta1 0.9, beta2 0.999,
// eps 1e-7); backbone features are extracted once and cached, so backbone
// parameters never change. The trace holds full-dataset accuracy/loss
// measured after each epoch's updates. Aborts with a diagnostic naming the
// epoch if the loss goes non-finite.
EpochTrace train(ClassifierModel& model, std::span<const ImageSample> train_set,
                 std::span<const ImageSample> val_set, const TrainingConfig& config);

// Predicted labels (argmax; ties resolve to class 0) and evaluation on a
// labeled split.
std::vector<int> predict_labels(const ClassifierModel& model,
                                std::span<const ImageSample> samples);
MetricReport evaluate_model(const ClassifierModel& model, std::span<const ImageSample> samples,
                            Averaging mode = Averaging::weighted);

// ---------------------------------------------------------------------------
// Grid search

struct GridSpec {
    std::vector<double> learning_rates{0.001, 0.01, 0.1};
    std::vector<int> epochs{10, 20, 30, 40, 50};
    std::vector<int> batch_sizes{5, 10, 15, 20};
};

struct GridCell {
    TrainingConfig config;
    double val_accuracy = 0.0;
};

struct GridResult {
    TrainingConfig best;
    std::vector<GridCell> table;  // one entry per grid combination
};

// Evaluates every (lr, epochs, batch) combination exactly once through
// `trainer` and returns the argmax validation accuracy; ties break toward
// lower lr, then fewer epochs, then smaller batch.
GridResult grid_search(const GridSpec& grids,
                       const std::function<double(const TrainingConfig&)>& trainer);

// CSV with header "lr,epochs,batch,val_accuracy".
void write_grid_csv(const std::filesystem::path& path, const GridResult& result);

// ---------------------------------------------------------------------------
// Repeated runs

struct RepeatedResult {
    MetricReport averaged;  // metric fields are arithmetic means across runs;
                            // the confusion matrix holds pooled counts
    std::vector<RunRecord> records;
};

RepeatedResult repeated_run(int n, const std::function<RunRecord(std::uint64_t)>& runner,
                            std::span<const std::uint64_t> seeds);

// ---------------------------------------------------------------------------
// Run persistence: runs/<run_id>.json

std::string timestamp_utc_compact();
std::string timestamp_utc_iso();
std::string make_run_id(const std::string& backbone, std::uint64_t seed);

std::filesystem::path save_run_record(const RunRecord& record,
                                      const std::filesystem::path& runs_dir);
RunRecord load_run_record(const std::filesystem::path& path);

struct LoadedRuns {
    std::vector<RunRecord> records;
    std::vector<std::string> warnings;  // corrupt files skipped
};
LoadedRuns load_runs(const std::filesystem::path& runs_dir);

}  // namespace covidscreen
