#include "covidscreen/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace covidscreen {

using nlohmann::json;

namespace {

double epoch_variance(const std::vector<double>& values) {
    if (values.empty()) return 0.0;
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    return var / static_cast<double>(values.size());
}

MetricReport average_reports(const std::vector<const MetricReport*>& reports) {
    MetricReport avg;
    avg.mode = reports.front()->mode;
    for (const MetricReport* m : reports) {
        avg.accuracy += m->accuracy;
        avg.precision += m->precision;
        avg.recall += m->recall;
        avg.f1 += m->f1;
        avg.confusion.tp += m->confusion.tp;
        avg.confusion.fp += m->confusion.fp;
        avg.confusion.tn += m->confusion.tn;
        avg.confusion.fn += m->confusion.fn;
        avg.zero_denominator = avg.zero_denominator || m->zero_denominator;
    }
    const double inv = 1.0 / static_cast<double>(reports.size());
    avg.accuracy *= inv;
    avg.precision *= inv;
    avg.recall *= inv;
    avg.f1 *= inv;
    return avg;
}

// Row label: plain backbone when every summary shares one dataset, otherwise
// backbone@dataset.
std::string row_label(const ModelSummary& s, bool single_dataset) {
    return single_dataset ? s.backbone : s.backbone + "@" + s.dataset_id;
}

bool single_dataset(const std::vector<ModelSummary>& summaries) {
    for (const auto& s : summaries) {
        if (s.dataset_id != summaries.front().dataset_id) return false;
    }
    return true;
}

}  // namespace

std::vector<ModelSummary> summarize_runs(const std::vector<RunRecord>& records) {
    if (records.empty()) throw std::invalid_argument("no run records to summarize");

    std::map<std::pair<std::string, std::string>, std::vector<const RunRecord*>> groups;
    for (const auto& r : records) groups[{r.dataset_id, r.backbone}].push_back(&r);

    std::vector<ModelSummary> out;
    out.reserve(groups.size());
    for (const auto& [key, runs] : groups) {
        ModelSummary s;
        s.dataset_id = key.first;
        s.backbone = key.second;
        s.runs = static_cast<int>(runs.size());

        std::vector<const MetricReport*> train, test;
        for (const RunRecord* r : runs) {
            train.push_back(&r->train_metrics);
            test.push_back(&r->test_metrics);
            s.misclassified += static_cast<double>(r->test_metrics.confusion.misclassified());
            s.val_loss_variance += epoch_variance(r->trace.val_loss);
            s.successes += static_cast<int>(r->test_metrics.confusion.correct());
            s.n += static_cast<int>(r->test_metrics.confusion.total());
        }
        s.train = average_reports(train);
        s.test = average_reports(test);
        s.misclassified /= static_cast<double>(s.runs);
        s.val_loss_variance /= static_cast<double>(s.runs);
        out.push_back(std::move(s));
    }
    return out;
}

const ModelSummary& select_best_model(const std::vector<ModelSummary>& summaries) {
    if (summaries.empty()) throw std::invalid_argument("no model summaries");
    const ModelSummary* best = &summaries.front();
    for (const auto& s : summaries) {
        if (&s == best) continue;
        bool take = false;
        if (s.test.accuracy != best->test.accuracy) {
            take = s.test.accuracy > best->test.accuracy;
        } else if (s.misclassified != best->misclassified) {
            take = s.misclassified < best->misclassified;
        } else if (s.val_loss_variance != best->val_loss_variance) {
            take = s.val_loss_variance < best->val_loss_variance;
        } else {
            take = std::make_pair(s.dataset_id, s.backbone) <
                   std::make_pair(best->dataset_id, best->backbone);
        }
        if (take) best = &s;
    }
    return *best;
}

std::vector<IntervalRecord> interval_records(const std::vector<ModelSummary>& summaries) {
    const bool single = single_dataset(summaries);
    std::vector<IntervalRecord> records;
    records.reserve(summaries.size());
    for (const auto& s : summaries) {
        records.push_back({row_label(s, single), s.successes, s.n});
    }
    return records;
}

void write_average_csv(const std::filesystem::path& path,
                       const std::vector<ModelSummary>& summaries) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    const bool single = single_dataset(summaries);
    out << "Model,Train Accuracy,Test Accuracy,Average Accuracy\n";
    for (const auto& s : summaries) {
        char line[160];
        std::snprintf(line, sizeof line, "%s,%.4f,%.4f,%.4f\n", row_label(s, single).c_str(),
                      s.train.accuracy, s.test.accuracy,
                      average_accuracy(s.train.accuracy, s.test.accuracy));
        out << line;
    }
}

void write_misclassification_csv(const std::filesystem::path& path,
                                 const std::vector<ModelSummary>& summaries) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    const bool single = single_dataset(summaries);
    out << "Model,Misclassified,Test Samples\n";
    for (const auto& s : summaries) {
        // Per-run means; integral for single runs, fractional across runs.
        char line[160];
        std::snprintf(line, sizeof line, "%s,%g,%g\n", row_label(s, single).c_str(),
                      s.misclassified, static_cast<double>(s.n) / s.runs);
        out << line;
    }
}

ReportBundle generate_report(const std::vector<RunRecord>& records,
                             const std::filesystem::path& out_dir, double alpha) {
    const std::vector<ModelSummary> summaries = summarize_runs(records);
    std::filesystem::create_directories(out_dir);
    const bool single = single_dataset(summaries);

    ReportBundle bundle;
    bundle.train_metrics_csv = out_dir / "train_metrics.csv";
    bundle.test_metrics_csv = out_dir / "test_metrics.csv";
    bundle.misclassification_csv = out_dir / "misclassification.csv";
    bundle.ci_csv = out_dir / "confidence_intervals.csv";
    bundle.average_csv = out_dir / "average_accuracy.csv";
    bundle.best_model_json = out_dir / "best_model.json";

    std::vector<std::pair<std::string, MetricReport>> train_rows, test_rows;
    for (const auto& s : summaries) {
        train_rows.emplace_back(row_label(s, single), s.train);
        test_rows.emplace_back(row_label(s, single), s.test);
    }
    write_metrics_csv(bundle.train_metrics_csv, train_rows);
    write_metrics_csv(bundle.test_metrics_csv, test_rows);
    write_misclassification_csv(bundle.misclassification_csv, summaries);
    write_interval_csv(bundle.ci_csv, interval_table(interval_records(summaries), alpha));
    write_average_csv(bundle.average_csv, summaries);

    const ModelSummary& best = select_best_model(summaries);
    json best_json{{"backbone", best.backbone},
                   {"dataset_id", best.dataset_id},
                   {"runs", best.runs},
                   {"test_accuracy", best.test.accuracy},
                   {"misclassified", best.misclassified},
                   {"val_loss_variance", best.val_loss_variance},
                   {"selection_factors",
                    "test accuracy desc, misclassifications asc, val-loss variance asc"}};
    std::ofstream out(bundle.best_model_json);
    if (!out) {
        throw std::runtime_error("cannot open for writing: " + bundle.best_model_json.string());
    }
    out << best_json.dump(2) << '\n';
    return bundle;
}

}  // namespace covidscreen
