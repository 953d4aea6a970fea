#include <doctest.h>

#include <cmath>
#include <fstream>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "covidscreen/training.hpp"
#include "testutil.hpp"

using covidscreen::ClassifierModel;
using covidscreen::GridSpec;
using covidscreen::RunRecord;
using covidscreen::TrainingConfig;

namespace {

RunRecord stub_record(const std::string& id, int tp, int fp, int tn, int fn) {
    RunRecord r;
    r.run_id = id;
    r.dataset_id = "synthetic";
    r.backbone = "TinyCNN";
    r.config.seed = 1;
    r.trace.train_accuracy = {0.5, 0.8};
    r.trace.train_loss = {0.7, 0.4};
    r.trace.val_accuracy = {0.5, 0.7};
    r.trace.val_loss = {0.7, 0.5};
    covidscreen::ConfusionMatrix cm;
    cm.tp = tp;
    cm.fp = fp;
    cm.tn = tn;
    cm.fn = fn;
    r.train_metrics = covidscreen::compute_metrics(cm);
    r.test_metrics = covidscreen::compute_metrics(cm);
    r.started = "2026-01-01T00:00:00Z";
    r.finished = "2026-01-01T00:01:00Z";
    return r;
}

}  // namespace

TEST_SUITE("training") {

TEST_CASE("training config validation") {
    TrainingConfig c;
    CHECK_NOTHROW(c.validate());
    c.learning_rate = 0.0;
    CHECK_THROWS(c.validate());
    c = {};
    c.epochs = 0;
    CHECK_THROWS(c.validate());
    c = {};
    c.batch_size = -5;
    CHECK_THROWS(c.validate());
    c = {};
    c.optimizer = "sgd";
    CHECK_THROWS(c.validate());
}

TEST_CASE("cross entropy clamps instead of diverging") {
    CHECK(covidscreen::cross_entropy({0.5, 0.5}, 0) == doctest::Approx(std::log(2.0)));
    CHECK(covidscreen::cross_entropy({1.0, 0.0}, 0) == doctest::Approx(0.0));
    CHECK(std::isfinite(covidscreen::cross_entropy({1.0, 0.0}, 1)));
    CHECK(covidscreen::cross_entropy({1.0, 0.0}, 1) == doctest::Approx(-std::log(1e-12)));
}

TEST_CASE("training fits a separable synthetic problem and fills the trace") {
    const auto samples = testutil::synthetic_samples(30, 32, 13);
    const auto [train_set, test_set] = covidscreen::stratified_split(samples, 0.8, 13);

    ClassifierModel model = covidscreen::build_classifier("TinyCNN", {256, 64}, 13);
    TrainingConfig cfg;
    cfg.epochs = 10;
    cfg.seed = 13;
    const std::uint64_t checksum = model.backbone_checksum();
    const auto trace = covidscreen::train(model, train_set, test_set, cfg);

    CHECK(model.backbone_checksum() == checksum);  // backbone stays frozen
    REQUIRE(trace.epochs() == 10);
    REQUIRE(trace.val_loss.size() == 10);
    CHECK(trace.train_loss.back() < trace.train_loss.front());
    CHECK(trace.train_accuracy.back() > 0.8);

    const auto report = covidscreen::evaluate_model(model, test_set);
    CHECK(report.accuracy > 0.8);
    CHECK(report.confusion.total() == static_cast<std::int64_t>(test_set.size()));

    // evaluate_model's confusion must agree with predict_labels tallies.
    const auto labels = covidscreen::predict_labels(model, test_set);
    std::vector<int> truth;
    for (const auto& s : test_set) truth.push_back(s.label);
    const auto cm = covidscreen::confusion(labels, truth, 0);
    CHECK(cm.tp == report.confusion.tp);
    CHECK(cm.fn == report.confusion.fn);
}

TEST_CASE("training is deterministic for a fixed seed") {
    const auto samples = testutil::synthetic_samples(10, 32, 14);
    const auto [train_set, test_set] = covidscreen::stratified_split(samples, 0.8, 14);
    TrainingConfig cfg;
    cfg.epochs = 3;
    cfg.seed = 21;

    ClassifierModel a = covidscreen::build_classifier("TinyCNN", {64, 32}, 2);
    ClassifierModel b = covidscreen::build_classifier("TinyCNN", {64, 32}, 2);
    const auto ta = covidscreen::train(a, train_set, test_set, cfg);
    const auto tb = covidscreen::train(b, train_set, test_set, cfg);
    CHECK(ta.train_loss == tb.train_loss);
    CHECK(ta.val_accuracy == tb.val_accuracy);
}

TEST_CASE("train validates inputs") {
    ClassifierModel model = covidscreen::build_classifier("TinyCNN", {16, 8}, 0);
    const auto samples = testutil::synthetic_samples(3, 32, 15);
    TrainingConfig cfg;
    cfg.epochs = 0;
    CHECK_THROWS(covidscreen::train(model, samples, samples, cfg));
    cfg = {};
    CHECK_THROWS(covidscreen::train(model, {}, samples, cfg));
}

TEST_CASE("grid search enumerates the full grid and finds the planted optimum") {
    const GridSpec grid;  // published defaults: 3 x 5 x 4
    std::set<std::tuple<double, int, int>> seen;
    const auto trainer = [&](const TrainingConfig& c) {
        seen.insert({c.learning_rate, c.epochs, c.batch_size});
        return (c.learning_rate == 0.01 && c.epochs == 30 && c.batch_size == 15) ? 0.93
               : 0.2 + 0.001 * static_cast<double>(seen.size());
    };
    const auto result = covidscreen::grid_search(grid, trainer);
    CHECK(result.table.size() == 60);
    CHECK(seen.size() == 60);
    CHECK(result.best.learning_rate == 0.01);
    CHECK(result.best.epochs == 30);
    CHECK(result.best.batch_size == 15);
}

TEST_CASE("grid search ties break toward lower lr, fewer epochs, smaller batch") {
    const GridSpec grid;
    const auto flat = [](const TrainingConfig&) { return 0.5; };
    const auto result = covidscreen::grid_search(grid, flat);
    CHECK(result.best.learning_rate == 0.001);
    CHECK(result.best.epochs == 10);
    CHECK(result.best.batch_size == 5);

    // A two-way tie must prefer the lower learning rate over earlier epochs.
    const auto two = [](const TrainingConfig& c) {
        if (c.learning_rate == 0.1 && c.epochs == 10 && c.batch_size == 5) return 0.9;
        if (c.learning_rate == 0.001 && c.epochs == 50 && c.batch_size == 20) return 0.9;
        return 0.1;
    };
    const auto r2 = covidscreen::grid_search(grid, two);
    CHECK(r2.best.learning_rate == 0.001);
    CHECK(r2.best.epochs == 50);
}

TEST_CASE("grid csv layout") {
    testutil::TempDir dir;
    GridSpec grid;
    grid.learning_rates = {0.001};
    grid.epochs = {10};
    grid.batch_sizes = {5, 10};
    const auto result = covidscreen::grid_search(
        grid, [](const TrainingConfig& c) { return c.batch_size == 10 ? 0.75 : 0.5; });
    const auto path = dir.path / "grid.csv";
    covidscreen::write_grid_csv(path, result);
    std::ifstream in(path);
    std::string header, row1, row2;
    std::getline(in, header);
    std::getline(in, row1);
    std::getline(in, row2);
    CHECK(header == "lr,epochs,batch,val_accuracy");
    CHECK(row1 == "0.001,10,5,0.500000");
    CHECK(row2 == "0.001,10,10,0.750000");
}

TEST_CASE("repeated_run averages metrics and pools confusion counts") {
    const std::vector<std::uint64_t> seeds{1, 2};
    int calls = 0;
    const auto runner = [&](std::uint64_t seed) {
        ++calls;
        return seed == 1 ? stub_record("a", 30, 10, 30, 10) : stub_record("b", 40, 0, 40, 0);
    };
    const auto result = covidscreen::repeated_run(2, runner, seeds);
    CHECK(calls == 2);
    REQUIRE(result.records.size() == 2);
    CHECK(result.averaged.accuracy == doctest::Approx((0.75 + 1.0) / 2.0));
    CHECK(result.averaged.confusion.tp == 70);
    CHECK(result.averaged.confusion.fp == 10);
    CHECK(result.averaged.confusion.total() == 160);
    CHECK_THROWS(covidscreen::repeated_run(3, runner, seeds));
}

TEST_CASE("run record json round trip and tamper detection") {
    const RunRecord r = stub_record("run_1", 35, 5, 36, 4);
    const auto j = r.to_json();
    const RunRecord back = RunRecord::from_json(j);
    CHECK(back.run_id == r.run_id);
    CHECK(back.backbone == r.backbone);
    CHECK(back.trace.val_loss == r.trace.val_loss);
    CHECK(back.test_metrics.accuracy == r.test_metrics.accuracy);
    CHECK(back.config.seed == 1);

    auto tampered = j;
    tampered["test_metrics"]["accuracy"] = 0.123;
    CHECK_THROWS(RunRecord::from_json(tampered));
}

TEST_CASE("run ids embed backbone and seed and never collide") {
    const auto a = covidscreen::make_run_id("TinyCNN", 7);
    const auto b = covidscreen::make_run_id("TinyCNN", 7);
    CHECK(a != b);
    CHECK(a.rfind("TinyCNN_", 0) == 0);
    CHECK(a.find("_s7_") != std::string::npos);
}

TEST_CASE("run records persist under runs/<run_id>.json with corrupt-file warnings") {
    testutil::TempDir dir;
    const auto runs_dir = dir.path / "runs";
    const RunRecord a = stub_record("alpha", 30, 10, 30, 10);
    const RunRecord b = stub_record("beta", 40, 0, 40, 0);
    const auto path_a = covidscreen::save_run_record(a, runs_dir);
    covidscreen::save_run_record(b, runs_dir);
    CHECK(path_a.filename() == "alpha.json");

    const RunRecord loaded = covidscreen::load_run_record(path_a);
    CHECK(loaded.run_id == "alpha");

    std::ofstream(runs_dir / "corrupt.json") << "{ not json";
    const auto all = covidscreen::load_runs(runs_dir);
    CHECK(all.records.size() == 2);
    CHECK(all.records[0].run_id == "alpha");  // sorted by filename
    CHECK(all.records[1].run_id == "beta");
    REQUIRE(all.warnings.size() == 1);
    CHECK(all.warnings[0].find("corrupt.json") != std::string::npos);
}

}  // TEST_SUITE
