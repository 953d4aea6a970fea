#include <doctest.h>

#include <fstream>
#include <stdexcept>
#include <string>

#include "covidscreen/config.hpp"
#include "covidscreen/explain.hpp"
#include "testutil.hpp"

using covidscreen::ExperimentConfig;
using covidscreen::FillPolicy;

TEST_SUITE("config") {

TEST_CASE("defaults match the published protocol") {
    ExperimentConfig c;
    CHECK(c.dataset_root.empty());
    CHECK(c.backbone == "TinyCNN");
    CHECK(c.output_dir == "out");
    CHECK(c.split_ratio == 0.8);
    CHECK(c.head_widths.first == 256);
    CHECK(c.head_widths.second == 64);
    CHECK(c.seed == 0);

    CHECK(c.training.learning_rate == 0.001);
    CHECK(c.training.epochs == 30);
    CHECK(c.training.batch_size == 5);
    CHECK(c.training.optimizer == "adam");

    CHECK(c.grids.learning_rates == std::vector<double>{0.001, 0.01, 0.1});
    CHECK(c.grids.epochs == std::vector<int>{10, 20, 30, 40, 50});
    CHECK(c.grids.batch_sizes == std::vector<int>{5, 10, 15, 20});

    CHECK(c.quickshift.kernel_size == 4.0);
    CHECK(c.quickshift.max_dist == 200.0);
    CHECK(c.quickshift.ratio == 0.2);

    CHECK(c.lime.n_perturbations == 150);
    CHECK(c.lime.kernel_width == 0.25);
    CHECK(c.lime.top_k == 4);
    CHECK(c.lime.fill == FillPolicy::mean_color);
}

TEST_CASE("set covers every key") {
    ExperimentConfig c;
    c.set("dataset_root", "/data/ct");
    c.set("backbone", "VGG16");
    c.set("output_dir", "results");
    c.set("split_ratio", "0.75");
    c.set("head_width1", "128");
    c.set("head_width2", "32");
    c.set("seed", "42");
    c.set("learning_rate", "0.01");
    c.set("epochs", "10");
    c.set("batch_size", "20");
    c.set("optimizer", "adam");
    c.set("qs_kernel_size", "2.5");
    c.set("qs_max_dist", "10");
    c.set("qs_ratio", "0.5");
    c.set("lime_perturbations", "80");
    c.set("lime_kernel_width", "0.3");
    c.set("lime_top_k", "6");
    c.set("lime_fill", "zero");

    CHECK(c.dataset_root == "/data/ct");
    CHECK(c.backbone == "VGG16");
    CHECK(c.output_dir == "results");
    CHECK(c.split_ratio == 0.75);
    CHECK(c.head_widths == std::pair<int, int>{128, 32});
    CHECK(c.seed == 42);
    CHECK(c.training.learning_rate == 0.01);
    CHECK(c.training.epochs == 10);
    CHECK(c.training.batch_size == 20);
    CHECK(c.quickshift.kernel_size == 2.5);
    CHECK(c.quickshift.max_dist == 10.0);
    CHECK(c.quickshift.ratio == 0.5);
    CHECK(c.lime.n_perturbations == 80);
    CHECK(c.lime.kernel_width == 0.3);
    CHECK(c.lime.top_k == 6);
    CHECK(c.lime.fill == FillPolicy::zero);

    // Top-level seed does not flow into sub-configs until propagate_seed.
    CHECK(c.training.seed == 0);
    c.propagate_seed();
    CHECK(c.training.seed == 42);
    CHECK(c.lime.seed == 42);
}

TEST_CASE("grid lists parse comma-separated values with spaces") {
    ExperimentConfig c;
    c.set("grid_learning_rates", "0.1, 0.001");
    c.set("grid_epochs", "5,15");
    c.set("grid_batch_sizes", " 10 ");
    CHECK(c.grids.learning_rates == std::vector<double>{0.1, 0.001});
    CHECK(c.grids.epochs == std::vector<int>{5, 15});
    CHECK(c.grids.batch_sizes == std::vector<int>{10});

    CHECK_THROWS_AS(c.set("grid_epochs", ","), std::invalid_argument);
    CHECK_THROWS_AS(c.set("grid_learning_rates", "0.1,abc"), std::invalid_argument);
}

TEST_CASE("unknown keys and malformed values are rejected") {
    ExperimentConfig c;
    CHECK_THROWS_WITH_AS(c.set("momentum", "0.9"), "unknown config key 'momentum'",
                         std::invalid_argument);
    CHECK_THROWS_AS(c.set("split_ratio", "eighty"), std::invalid_argument);
    CHECK_THROWS_AS(c.set("split_ratio", "0.8x"), std::invalid_argument);
    CHECK_THROWS_AS(c.set("epochs", "3.5"), std::invalid_argument);
    CHECK_THROWS_AS(c.set("seed", "-1"), std::invalid_argument);
    CHECK_THROWS_AS(c.set("lime_fill", "average"), std::invalid_argument);
}

TEST_CASE("apply_assignment splits on the first '=' and trims") {
    ExperimentConfig c;
    covidscreen::apply_assignment(c, "  backbone = VGG19 ");
    CHECK(c.backbone == "VGG19");
    covidscreen::apply_assignment(c, "epochs=7");
    CHECK(c.training.epochs == 7);

    CHECK_THROWS_AS(covidscreen::apply_assignment(c, "epochs"), std::invalid_argument);
    CHECK_THROWS_AS(covidscreen::apply_assignment(c, "=5"), std::invalid_argument);
}

TEST_CASE("config files allow comments and blank lines") {
    testutil::TempDir dir;
    const auto path = dir.path / "run.cfg";
    {
        std::ofstream out(path);
        out << "# experiment setup\n"
            << "\n"
            << "backbone = MobileNetV2  # frozen\n"
            << "seed = 9\n"
            << "epochs = 12\n";
    }
    const ExperimentConfig c = covidscreen::parse_config_file(path);
    CHECK(c.backbone == "MobileNetV2");
    CHECK(c.seed == 9);
    CHECK(c.training.epochs == 12);
    // parse_config_file propagates the seed after parsing.
    CHECK(c.training.seed == 9);
    CHECK(c.lime.seed == 9);
}

TEST_CASE("config file errors carry file and line number") {
    testutil::TempDir dir;
    const auto path = dir.path / "bad.cfg";
    {
        std::ofstream out(path);
        out << "backbone = VGG16\n"
            << "# fine so far\n"
            << "warp_speed = 9\n";
    }
    try {
        covidscreen::parse_config_file(path);
        FAIL("expected invalid_argument");
    } catch (const std::invalid_argument& e) {
        const std::string msg = e.what();
        CHECK(msg.find(path.string() + ":3") != std::string::npos);
        CHECK(msg.find("warp_speed") != std::string::npos);
    }

    CHECK_THROWS_AS(covidscreen::parse_config_file(dir.path / "absent.cfg"),
                    std::runtime_error);
}

}  // TEST_SUITE
