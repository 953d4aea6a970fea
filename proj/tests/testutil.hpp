#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "covidscreen/dataset.hpp"
#include "covidscreen/image.hpp"
#include "covidscreen/imageio.hpp"

namespace testutil {

// Unique scratch directory, removed on destruction.
struct TempDir {
    std::filesystem::path path;

    TempDir() {
        static std::atomic<int> counter{0};
        std::random_device rd;
        const auto tag = std::to_string(rd()) + "_" + std::to_string(counter++);
        path = std::filesystem::temp_directory_path() / ("covidscreen_test_" + tag);
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
};

struct EnvVar {
    std::string name;
    bool had = false;
    std::string old;

    EnvVar(const std::string& n, const std::string& value) : name(n) {
        if (const char* prev = std::getenv(n.c_str())) {
            had = true;
            old = prev;
        }
        ::setenv(n.c_str(), value.c_str(), 1);
    }
    ~EnvVar() {
        if (had) ::setenv(name.c_str(), old.c_str(), 1);
        else ::unsetenv(name.c_str());
    }
};

inline covidscreen::Tensor random_image(int h, int w, int c, std::mt19937_64& rng) {
    covidscreen::Tensor t(h, w, c);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (auto& v : t.values()) v = u(rng);
    return t;
}

// Bright disk at a jittered center on a dark background.
inline covidscreen::Tensor blob_image(int size, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> jitter(-4.0, 4.0);
    std::uniform_real_distribution<double> noise(-0.03, 0.03);
    const double cy = size / 2.0 + jitter(rng);
    const double cx = size / 2.0 + jitter(rng);
    const double r = size / 4.0 + jitter(rng) / 2.0;
    covidscreen::Tensor t(size, size, 3);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const double d = std::hypot(y - cy, x - cx);
            const double v = (d <= r ? 0.9 : 0.1) + noise(rng);
            for (int c = 0; c < 3; ++c) t.at(y, x, c) = std::clamp(v, 0.0, 1.0);
        }
    return t;
}

// Vertical bars of period 4 with a random phase.
inline covidscreen::Tensor stripe_image(int size, std::mt19937_64& rng) {
    std::uniform_int_distribution<int> phase_dist(0, 3);
    std::uniform_real_distribution<double> noise(-0.03, 0.03);
    const int phase = phase_dist(rng);
    covidscreen::Tensor t(size, size, 3);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const double v = (((x + phase) / 2) % 2 == 0 ? 0.85 : 0.15) + noise(rng);
            for (int c = 0; c < 3; ++c) t.at(y, x, c) = std::clamp(v, 0.0, 1.0);
        }
    return t;
}

// Two visually distinct classes: class 0 = disks, class 1 = stripes.
inline std::vector<covidscreen::ImageSample> synthetic_samples(int per_class, int size,
                                                               std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<covidscreen::ImageSample> samples;
    samples.reserve(static_cast<std::size_t>(per_class) * 2);
    for (int i = 0; i < per_class; ++i) {
        samples.push_back({blob_image(size, rng), 0, "disk/" + std::to_string(i) + ".png"});
        samples.push_back({stripe_image(size, rng), 1, "stripe/" + std::to_string(i) + ".png"});
    }
    return samples;
}

// The same two classes written to `root/<class>/NNN.png` for CLI-level tests.
inline void write_synthetic_dataset(const std::filesystem::path& root, int per_class, int size,
                                    std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::filesystem::create_directories(root / "disk");
    std::filesystem::create_directories(root / "stripe");
    for (int i = 0; i < per_class; ++i) {
        char name[16];
        std::snprintf(name, sizeof name, "%03d.png", i);
        covidscreen::write_png(root / "disk" / name, blob_image(size, rng));
        covidscreen::write_png(root / "stripe" / name, stripe_image(size, rng));
    }
}

}  // namespace testutil
