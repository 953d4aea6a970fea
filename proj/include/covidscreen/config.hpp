#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>

#include "covidscreen/explain.hpp"
#include "covidscreen/segmentation.hpp"
#include "covidscreen/training.hpp"

namespace covidscreen {

// Experiment configuration with every default pinned to the published
// protocol: lr 0.001, 30 epochs, batch 5, 150 perturbations, kernel width
// 0.25, quick-shift (4, 200, 0.2), top-4 features.
struct ExperimentConfig {
    std::string dataset_root;
    std::string backbone = "TinyCNN";
    std::string output_dir = "out";
    double split_ratio = 0.8;
    std::pair<int, int> head_widths{256, 64};
    std::uint64_t seed = 0;

    TrainingConfig training;
    GridSpec grids;
    QuickShiftParams quickshift;
    LimeParams lime;

    // Applies one key=value assignment; unknown keys are rejected.
    void set(const std::string& key, const std::string& value);
    // Propagates the top-level seed into training and lime seeds.
    void propagate_seed();
};

// Flat `key = value` file with '#' comments and blank lines.
ExperimentConfig parse_config_file(const std::filesystem::path& path);

// Same, applied over an existing config so callers can layer defaults,
// environment, file, and flag overrides in that order.
void parse_config_file_into(ExperimentConfig& config, const std::filesystem::path& path);

// Parses assignments into an existing config (used for flag overrides).
void apply_assignment(ExperimentConfig& config, const std::string& assignment);

}  // namespace covidscreen
