#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace covidscreen {

// tp/fp/tn/fn counts with a fixed positive class.
struct ConfusionMatrix {
    std::int64_t tp = 0;
    std::int64_t fp = 0;
    std::int64_t tn = 0;
    std::int64_t fn = 0;

    std::int64_t total() const { return tp + fp + tn + fn; }
    std::int64_t correct() const { return tp + tn; }
    std::int64_t misclassified() const { return fp + fn; }
};

enum class Averaging { binary, macro, weighted };

struct MetricReport {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    Averaging mode = Averaging::weighted;
    ConfusionMatrix confusion;
    // Set when a precision or recall denominator was zero and the component
    // was defined as 0.
    bool zero_denominator = false;
};

// Tally a confusion matrix. `positive_class` selects which label counts as
// positive; predictions and truths must have equal, non-zero length.
ConfusionMatrix confusion(std::span<const int> predictions, std::span<const int> truths,
                          int positive_class);

// Accuracy  = (tp+tn) / total
// Precision = tp / (tp+fp)
// Recall    = tp / (tp+fn)
// F1        = 2*P*R / (P+R)
// macro/weighted modes average the per-class binary scores (unweighted and
// support-weighted respectively); accuracy is mode-independent.
//
// Recall deliberately uses the tp/(tp+fn) form. The source formula sheet
// prints tp/(tn+fp) for recall, which contradicts its own tp/fn definitions;
// a dedicated unit test pins this choice.
MetricReport compute_metrics(const ConfusionMatrix& cm, Averaging mode = Averaging::weighted);

// Arithmetic mean of a train/test accuracy pair.
double average_accuracy(double train_acc, double test_acc);

// Arithmetic mean of train/test accuracies across two datasets.
double cross_dataset_average(double train_a, double test_a, double train_b, double test_b);

std::string averaging_name(Averaging mode);
Averaging averaging_from_name(const std::string& name);

nlohmann::json metric_report_to_json(const MetricReport& report);
MetricReport metric_report_from_json(const nlohmann::json& j);

// CSV with header "Model,Accuracy,Precision,Recall,F1-Score".
void write_metrics_csv(const std::filesystem::path& path,
                       const std::vector<std::pair<std::string, MetricReport>>& rows);

}  // namespace covidscreen
