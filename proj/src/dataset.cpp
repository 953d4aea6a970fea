#include "covidscreen/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "covidscreen/imageio.hpp"

namespace covidscreen {

using nlohmann::json;

namespace {

bool has_image_extension(const std::filesystem::path& p) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

}  // namespace

LoadedDataset load_directory(const std::filesystem::path& root,
                             std::pair<int, int> target_size) {
    if (!std::filesystem::is_directory(root)) {
        throw std::runtime_error("dataset root " + root.string() + " is not a directory");
    }
    if (target_size.first < 1 || target_size.second < 1) {
        throw std::invalid_argument("target size must be positive");
    }

    std::vector<std::string> class_dirs;
    for (const auto& entry : std::filesystem::directory_iterator(root)) {
        if (entry.is_directory()) class_dirs.push_back(entry.path().filename().string());
    }
    if (class_dirs.size() != 2) {
        throw std::runtime_error("dataset root must contain exactly two class directories, found " +
                                 std::to_string(class_dirs.size()));
    }
    std::sort(class_dirs.begin(), class_dirs.end());

    LoadedDataset out;
    out.class_names = {class_dirs[0], class_dirs[1]};
    for (int label = 0; label < 2; ++label) {
        std::vector<std::filesystem::path> files;
        for (const auto& entry : std::filesystem::directory_iterator(root / class_dirs[label])) {
            if (entry.is_regular_file() && has_image_extension(entry.path())) {
                files.push_back(entry.path());
            }
        }
        std::sort(files.begin(), files.end());

        int loaded = 0;
        for (const auto& file : files) {
            try {
                Tensor img = read_image(file);
                ImageSample sample;
                sample.pixels = resize_bilinear(img, target_size.first, target_size.second);
                sample.label = label;
                sample.source_id =
                    (std::filesystem::path(class_dirs[label]) / file.filename()).generic_string();
                out.samples.push_back(std::move(sample));
                ++loaded;
            } catch (const std::exception& e) {
                out.file_errors.push_back({file.string(), e.what()});
            }
        }
        if (loaded == 0) {
            throw std::runtime_error("class directory '" + class_dirs[label] +
                                     "' yielded no decodable images");
        }
    }
    return out;
}

std::pair<std::vector<ImageSample>, std::vector<ImageSample>> stratified_split(
    const std::vector<ImageSample>& samples, double ratio, std::uint64_t seed) {
    if (!(ratio > 0.0 && ratio < 1.0)) {
        throw std::invalid_argument("split ratio must lie in (0,1)");
    }
    std::array<std::vector<std::size_t>, 2> by_class;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const int label = samples[i].label;
        if (label < 0 || label > 1) {
            throw std::invalid_argument("sample label outside {0,1}");
        }
        by_class[label].push_back(i);
    }
    for (int label = 0; label < 2; ++label) {
        if (by_class[label].size() < 2) {
            throw std::invalid_argument("class " + std::to_string(label) +
                                        " has fewer than 2 samples; cannot split");
        }
    }

    std::mt19937_64 rng(seed);
    std::vector<ImageSample> train, test;
    for (int label = 0; label < 2; ++label) {
        auto& idx = by_class[label];
        std::shuffle(idx.begin(), idx.end(), rng);
        const auto n_test = static_cast<std::size_t>(
            std::llround((1.0 - ratio) * static_cast<double>(idx.size())));
        std::vector<std::size_t> test_idx(idx.begin(), idx.begin() + n_test);
        std::vector<std::size_t> train_idx(idx.begin() + n_test, idx.end());
        std::sort(test_idx.begin(), test_idx.end());
        std::sort(train_idx.begin(), train_idx.end());
        for (std::size_t i : train_idx) train.push_back(samples[i]);
        for (std::size_t i : test_idx) test.push_back(samples[i]);
    }

    std::unordered_set<std::string> train_ids;
    for (const auto& s : train) train_ids.insert(s.source_id);
    for (const auto& s : test) {
        if (train_ids.count(s.source_id)) {
            throw std::runtime_error("source_id appears in both train and test: " + s.source_id);
        }
    }
    return {std::move(train), std::move(test)};
}

Tensor preprocess(const ImageSample& sample, const BackboneSpec& backbone) {
    Tensor img = sample.pixels;
    if (img.channels() == 1) img = replicate_to_rgb(img);
    if (img.channels() != backbone.input_c) {
        throw std::invalid_argument("sample has " + std::to_string(img.channels()) +
                                    " channels, backbone " + backbone.name + " expects " +
                                    std::to_string(backbone.input_c));
    }
    if (img.height() != backbone.input_h || img.width() != backbone.input_w) {
        img = resize_bilinear(img, backbone.input_h, backbone.input_w);
    }
    if (img.height() != backbone.input_h || img.width() != backbone.input_w ||
        img.channels() != backbone.input_c) {
        throw std::runtime_error("preprocessed shape does not match backbone input");
    }
    Tensor out(img.height(), img.width(), img.channels());
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x)
            for (int c = 0; c < img.channels(); ++c)
                out.at(y, x, c) =
                    (img.at(y, x, c) - backbone.normalization.mean[c]) /
                    backbone.normalization.stddev[c];
    return out;
}

DatasetManifest make_manifest(const std::array<std::string, 2>& class_names,
                              const std::vector<ImageSample>& train,
                              const std::vector<ImageSample>& test, double split_ratio,
                              std::uint64_t seed) {
    DatasetManifest m;
    m.class_names = class_names;
    m.split_ratio = split_ratio;
    m.seed = seed;
    for (const auto& s : train) ++m.train_count[s.label];
    for (const auto& s : test) ++m.test_count[s.label];
    return m;
}

json DatasetManifest::to_json() const {
    return json{{"class_names", class_names},
                {"train_count", train_count},
                {"test_count", test_count},
                {"split_ratio", split_ratio},
                {"seed", seed}};
}

DatasetManifest DatasetManifest::from_json(const json& j) {
    DatasetManifest m;
    auto names = j.at("class_names").get<std::vector<std::string>>();
    auto train = j.at("train_count").get<std::vector<int>>();
    auto test = j.at("test_count").get<std::vector<int>>();
    if (names.size() != 2 || train.size() != 2 || test.size() != 2) {
        throw std::runtime_error("manifest arrays must have exactly two entries");
    }
    m.class_names = {names[0], names[1]};
    m.train_count = {train[0], train[1]};
    m.test_count = {test[0], test[1]};
    m.split_ratio = j.at("split_ratio").get<double>();
    m.seed = j.at("seed").get<std::uint64_t>();
    return m;
}

void DatasetManifest::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write manifest " + path.string());
    out << to_json().dump(2) << '\n';
}

DatasetManifest DatasetManifest::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read manifest " + path.string());
    return from_json(json::parse(in));
}

}  // namespace covidscreen
