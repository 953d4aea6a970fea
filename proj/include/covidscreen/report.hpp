#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "covidscreen/confidence.hpp"
#include "covidscreen/metrics.hpp"
#include "covidscreen/training.hpp"

namespace covidscreen {

// Aggregate of every run of one model on one dataset; metric values are
// arithmetic means across the runs (the repeated-run protocol).
struct ModelSummary {
    std::string dataset_id;
    std::string backbone;
    int runs = 0;
    MetricReport train;            // averaged
    MetricReport test;             // averaged
    double misclassified = 0.0;    // mean test fp+fn
    double val_loss_variance = 0.0;  // epoch-wise variance, averaged over runs
    int successes = 0;             // pooled test tp+tn (for intervals)
    int n = 0;                     // pooled test totals
};

std::vector<ModelSummary> summarize_runs(const std::vector<RunRecord>& records);

// Best model per the deterministic encoding of the paper's selection factors:
// higher mean test accuracy, then fewer mean misclassifications, then lower
// validation-loss variance.
const ModelSummary& select_best_model(const std::vector<ModelSummary>& summaries);

struct ReportBundle {
    std::filesystem::path train_metrics_csv;
    std::filesystem::path test_metrics_csv;
    std::filesystem::path misclassification_csv;
    std::filesystem::path ci_csv;
    std::filesystem::path average_csv;
    std::filesystem::path best_model_json;
};

// Writes the full report family under out_dir: per-split metric tables,
// misclassification counts, the confidence-interval table (level 1-alpha),
// train/test average accuracies, and the best-model summary.
ReportBundle generate_report(const std::vector<RunRecord>& records,
                             const std::filesystem::path& out_dir, double alpha = 0.05);

// Individual table writers, reused by the CLI report subcommands.
void write_average_csv(const std::filesystem::path& path,
                       const std::vector<ModelSummary>& summaries);
void write_misclassification_csv(const std::filesystem::path& path,
                                 const std::vector<ModelSummary>& summaries);
std::vector<IntervalRecord> interval_records(const std::vector<ModelSummary>& summaries);

}  // namespace covidscreen
