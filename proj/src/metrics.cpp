#include "covidscreen/metrics.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace covidscreen {

namespace {

struct BinaryScores {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    bool zero_denominator = false;
};

BinaryScores binary_scores(std::int64_t tp, std::int64_t fp, std::int64_t fn) {
    BinaryScores s;
    if (tp + fp > 0)
        s.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    else
        s.zero_denominator = true;
    if (tp + fn > 0)
        s.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
    else
        s.zero_denominator = true;
    if (s.precision + s.recall > 0.0)
        s.f1 = 2.0 * s.precision * s.recall / (s.precision + s.recall);
    return s;
}

}  // namespace

ConfusionMatrix confusion(std::span<const int> predictions, std::span<const int> truths,
                          int positive_class) {
    if (predictions.size() != truths.size())
        throw std::invalid_argument("confusion: predictions/truths length mismatch");
    if (predictions.empty())
        throw std::invalid_argument("confusion: need at least one sample");
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const bool pred_pos = predictions[i] == positive_class;
        const bool true_pos = truths[i] == positive_class;
        if (pred_pos && true_pos) ++cm.tp;
        else if (pred_pos && !true_pos) ++cm.fp;
        else if (!pred_pos && true_pos) ++cm.fn;
        else ++cm.tn;
    }
    return cm;
}

MetricReport compute_metrics(const ConfusionMatrix& cm, Averaging mode) {
    if (cm.total() <= 0)
        throw std::invalid_argument("compute_metrics: empty confusion matrix");

    MetricReport r;
    r.mode = mode;
    r.confusion = cm;
    r.accuracy = static_cast<double>(cm.correct()) / static_cast<double>(cm.total());

    // Positive class as-is, then the complementary class (tn/fn/fp swap roles).
    const BinaryScores pos = binary_scores(cm.tp, cm.fp, cm.fn);
    const BinaryScores neg = binary_scores(cm.tn, cm.fn, cm.fp);
    r.zero_denominator = pos.zero_denominator ||
                         (mode != Averaging::binary && neg.zero_denominator);

    switch (mode) {
        case Averaging::binary:
            r.precision = pos.precision;
            r.recall = pos.recall;
            r.f1 = pos.f1;
            break;
        case Averaging::macro:
            r.precision = 0.5 * (pos.precision + neg.precision);
            r.recall = 0.5 * (pos.recall + neg.recall);
            r.f1 = 0.5 * (pos.f1 + neg.f1);
            break;
        case Averaging::weighted: {
            const double support_pos = static_cast<double>(cm.tp + cm.fn);
            const double support_neg = static_cast<double>(cm.tn + cm.fp);
            const double total = support_pos + support_neg;
            r.precision = (support_pos * pos.precision + support_neg * neg.precision) / total;
            r.recall = (support_pos * pos.recall + support_neg * neg.recall) / total;
            r.f1 = (support_pos * pos.f1 + support_neg * neg.f1) / total;
            break;
        }
    }
    return r;
}

double average_accuracy(double train_acc, double test_acc) {
    return 0.5 * (train_acc + test_acc);
}

double cross_dataset_average(double train_a, double test_a, double train_b, double test_b) {
    return (train_a + test_a + train_b + test_b) / 4.0;
}

std::string averaging_name(Averaging mode) {
    switch (mode) {
        case Averaging::binary: return "binary";
        case Averaging::macro: return "macro";
        case Averaging::weighted: return "weighted";
    }
    return "weighted";
}

Averaging averaging_from_name(const std::string& name) {
    if (name == "binary") return Averaging::binary;
    if (name == "macro") return Averaging::macro;
    if (name == "weighted") return Averaging::weighted;
    throw std::invalid_argument("unknown averaging mode: " + name);
}

nlohmann::json metric_report_to_json(const MetricReport& report) {
    return nlohmann::json{
        {"accuracy", report.accuracy},
        {"precision", report.precision},
        {"recall", report.recall},
        {"f1", report.f1},
        {"averaging", averaging_name(report.mode)},
        {"zero_denominator", report.zero_denominator},
        {"confusion",
         {{"tp", report.confusion.tp},
          {"fp", report.confusion.fp},
          {"tn", report.confusion.tn},
          {"fn", report.confusion.fn}}}};
}

MetricReport metric_report_from_json(const nlohmann::json& j) {
    MetricReport r;
    r.accuracy = j.at("accuracy").get<double>();
    r.precision = j.at("precision").get<double>();
    r.recall = j.at("recall").get<double>();
    r.f1 = j.at("f1").get<double>();
    r.mode = averaging_from_name(j.at("averaging").get<std::string>());
    r.zero_denominator = j.at("zero_denominator").get<bool>();
    const auto& cj = j.at("confusion");
    r.confusion = {cj.at("tp").get<std::int64_t>(), cj.at("fp").get<std::int64_t>(),
                   cj.at("tn").get<std::int64_t>(), cj.at("fn").get<std::int64_t>()};
    return r;
}

void write_metrics_csv(const std::filesystem::path& path,
                       const std::vector<std::pair<std::string, MetricReport>>& rows) {
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("cannot open for writing: " + path.string());
    out << "Model,Accuracy,Precision,Recall,F1-Score\n";
    out << std::fixed << std::setprecision(4);
    for (const auto& [name, report] : rows)
        out << name << ',' << report.accuracy << ',' << report.precision << ','
            << report.recall << ',' << report.f1 << '\n';
}

}  // namespace covidscreen
