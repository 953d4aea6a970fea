#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace covidscreen {

// Row-major H x W x C grid of doubles. Images keep their values in [0,1];
// feature maps and preprocessed inputs may hold anything.
class Tensor {
public:
    Tensor() = default;
    Tensor(int height, int width, int channels, double fill = 0.0)
        : h_(height), w_(width), c_(channels),
          data_(static_cast<std::size_t>(height) * width * channels, fill) {}

    int height() const { return h_; }
    int width() const { return w_; }
    int channels() const { return c_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& at(int y, int x, int ch) {
        return data_[(static_cast<std::size_t>(y) * w_ + x) * c_ + ch];
    }
    double at(int y, int x, int ch) const {
        return data_[(static_cast<std::size_t>(y) * w_ + x) * c_ + ch];
    }

    std::span<double> values() { return data_; }
    std::span<const double> values() const { return data_; }

    bool same_shape(const Tensor& o) const {
        return h_ == o.h_ && w_ == o.w_ && c_ == o.c_;
    }

private:
    int h_ = 0, w_ = 0, c_ = 0;
    std::vector<double> data_;
};

// Bilinear resample to out_h x out_w, channel count preserved.
Tensor resize_bilinear(const Tensor& src, int out_h, int out_w);

// Replicate a single-channel image to three channels.
Tensor replicate_to_rgb(const Tensor& gray);

void clamp01(Tensor& t);

// Elementwise min/max over all entries; requires non-empty input.
std::pair<double, double> value_range(const Tensor& t);

}  // namespace covidscreen
