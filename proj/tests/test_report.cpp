#include <doctest.h>

#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "covidscreen/report.hpp"
#include "testutil.hpp"

using covidscreen::ModelSummary;
using covidscreen::RunRecord;

namespace {

RunRecord record_for(const std::string& dataset, const std::string& backbone, int correct,
                     int total, std::vector<double> val_loss) {
    RunRecord r;
    r.run_id = backbone + "_" + dataset + "_" + std::to_string(correct);
    r.dataset_id = dataset;
    r.backbone = backbone;
    covidscreen::ConfusionMatrix cm;
    cm.tp = correct / 2;
    cm.tn = correct - correct / 2;
    cm.fp = (total - correct) / 2;
    cm.fn = (total - correct) - (total - correct) / 2;
    r.train_metrics = covidscreen::compute_metrics(cm);
    r.test_metrics = r.train_metrics;
    r.trace.train_accuracy = {0.5, 0.9};
    r.trace.train_loss = {0.6, 0.2};
    r.trace.val_accuracy = {0.5, 0.8};
    r.trace.val_loss = std::move(val_loss);
    r.started = r.finished = "2026-01-01T00:00:00Z";
    return r;
}

}  // namespace

TEST_SUITE("report") {

TEST_CASE("summaries group by dataset and backbone with pooled counts") {
    const std::vector<RunRecord> records{
        record_for("ct", "TinyCNN", 72, 80, {0.5, 0.5}),
        record_for("ct", "TinyCNN", 68, 80, {0.4, 0.6}),
        record_for("ct", "Other", 44, 80, {0.9, 0.9}),
    };
    const auto summaries = covidscreen::summarize_runs(records);
    REQUIRE(summaries.size() == 2);
    // std::map ordering: "Other" before "TinyCNN".
    CHECK(summaries[0].backbone == "Other");
    const ModelSummary& tiny = summaries[1];
    CHECK(tiny.runs == 2);
    CHECK(tiny.test.accuracy == doctest::Approx((72.0 / 80.0 + 68.0 / 80.0) / 2.0));
    CHECK(tiny.successes == 140);
    CHECK(tiny.n == 160);
    CHECK(tiny.misclassified == doctest::Approx((8 + 12) / 2.0));
    // First run's val-loss variance is 0, second is var({0.4, 0.6}) = 0.01.
    CHECK(tiny.val_loss_variance == doctest::Approx(0.005));
}

TEST_CASE("best model ranks accuracy, then misclassifications, then variance") {
    const auto summaries = covidscreen::summarize_runs({
        record_for("ct", "A", 70, 80, {0.5, 0.5}),
        record_for("ct", "B", 75, 80, {0.5, 0.5}),
        record_for("ct", "C", 75, 80, {0.1, 0.9}),
    });
    // A loses on accuracy; B and C tie on accuracy and misclassified; B wins
    // on variance.
    const auto& best = covidscreen::select_best_model(summaries);
    CHECK(best.backbone == "B");

    CHECK_THROWS(covidscreen::select_best_model({}));
}

TEST_CASE("interval records pool successes over runs") {
    const auto summaries = covidscreen::summarize_runs({
        record_for("ct", "TinyCNN", 72, 80, {0.5}),
        record_for("xray", "TinyCNN", 78, 80, {0.5}),
    });
    const auto records = covidscreen::interval_records(summaries);
    REQUIRE(records.size() == 2);
    // Two datasets force qualified labels.
    CHECK(records[0].label == "TinyCNN@ct");
    CHECK(records[0].successes == 72);
    CHECK(records[0].n == 80);
    CHECK(records[1].label == "TinyCNN@xray");
}

TEST_CASE("average accuracy csv reproduces the train/test mean") {
    testutil::TempDir dir;
    const auto summaries = covidscreen::summarize_runs({
        record_for("ct", "VGGish", 68, 80, {0.5}),  // 0.85 train = test
    });
    const auto path = dir.path / "avg.csv";
    covidscreen::write_average_csv(path, summaries);
    std::ifstream in(path);
    std::string header, row;
    std::getline(in, header);
    std::getline(in, row);
    CHECK(header == "Model,Train Accuracy,Test Accuracy,Average Accuracy");
    CHECK(row == "VGGish,0.8500,0.8500,0.8500");
}

TEST_CASE("misclassification csv uses per-run means") {
    testutil::TempDir dir;
    const auto summaries = covidscreen::summarize_runs({
        record_for("ct", "TinyCNN", 72, 80, {0.5}),
        record_for("ct", "TinyCNN", 71, 80, {0.5}),
    });
    const auto path = dir.path / "mis.csv";
    covidscreen::write_misclassification_csv(path, summaries);
    std::ifstream in(path);
    std::string header, row;
    std::getline(in, header);
    std::getline(in, row);
    CHECK(header == "Model,Misclassified,Test Samples");
    CHECK(row == "TinyCNN,8.5,80");
}

TEST_CASE("generate_report writes the full bundle") {
    testutil::TempDir dir;
    const std::vector<RunRecord> records{
        record_for("ct", "TinyCNN", 72, 80, {0.5, 0.5}),
        record_for("ct", "Other", 60, 80, {0.5, 0.5}),
    };
    const auto bundle = covidscreen::generate_report(records, dir.path / "report", 0.05);
    for (const auto& p :
         {bundle.train_metrics_csv, bundle.test_metrics_csv, bundle.misclassification_csv,
          bundle.ci_csv, bundle.average_csv, bundle.best_model_json}) {
        CHECK(std::filesystem::exists(p));
    }

    std::ifstream in(bundle.best_model_json);
    const auto j = nlohmann::json::parse(in);
    CHECK(j.at("backbone") == "TinyCNN");
    CHECK(j.at("runs") == 1);
    CHECK(j.at("test_accuracy") == doctest::Approx(0.9));

    // The CI table feeds from pooled counts; numerics are covered elsewhere.
    std::ifstream ci(bundle.ci_csv);
    std::string header, row;
    std::getline(ci, header);
    std::getline(ci, row);
    CHECK(row.rfind("Other,0.750,0.645,0.832,", 0) == 0);
}

}  // TEST_SUITE
