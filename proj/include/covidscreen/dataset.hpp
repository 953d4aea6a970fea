#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "covidscreen/image.hpp"
#include "covidscreen/model.hpp"

namespace covidscreen {

struct ImageSample {
    Tensor pixels;          // H x W x 3, values in [0,1]
    int label = 0;          // class index, lexicographic class-name order
    std::string source_id;  // path relative to the dataset root
};

struct FileError {
    std::string path;
    std::string reason;
};

struct LoadedDataset {
    std::vector<ImageSample> samples;
    std::array<std::string, 2> class_names;
    std::vector<FileError> file_errors;  // undecodable files, run continued
};

struct DatasetManifest {
    std::array<std::string, 2> class_names;
    std::array<int, 2> train_count{0, 0};
    std::array<int, 2> test_count{0, 0};
    double split_ratio = 0.8;
    std::uint64_t seed = 0;

    nlohmann::json to_json() const;
    static DatasetManifest from_json(const nlohmann::json& j);
    void save(const std::filesystem::path& path) const;
    static DatasetManifest load(const std::filesystem::path& path);
};

// Reads `root/<class>/*.{png,jpg,jpeg}` for exactly two class directories,
// resizing everything to target (h, w). Class names are ordered
// lexicographically and define labels 0/1. Undecodable files are collected in
// file_errors; the load fails only if a class ends up empty.
LoadedDataset load_directory(const std::filesystem::path& root, std::pair<int, int> target_size);

// Per-class shuffle + split: test count = round((1-ratio) * class size).
// Deterministic for a fixed seed; verifies train/test disjointness by
// source_id.
std::pair<std::vector<ImageSample>, std::vector<ImageSample>> stratified_split(
    const std::vector<ImageSample>& samples, double ratio, std::uint64_t seed);

// Resizes to the backbone input size and applies its per-channel
// normalization: out = (pixel - mean[c]) / stddev[c].
Tensor preprocess(const ImageSample& sample, const BackboneSpec& backbone);

DatasetManifest make_manifest(const std::array<std::string, 2>& class_names,
                              const std::vector<ImageSample>& train,
                              const std::vector<ImageSample>& test, double split_ratio,
                              std::uint64_t seed);

}  // namespace covidscreen
