#pragma once

#include <filesystem>
#include <vector>

#include "covidscreen/image.hpp"

namespace covidscreen {

// Quick-shift parameters. kernel_size is the density kernel bandwidth in
// pixels, max_dist the link-cut threshold in feature-space units, ratio the
// color-vs-space weighting in (0,1]. Ties everywhere resolve in raster order.
struct QuickShiftParams {
    double kernel_size = 4.0;
    double max_dist = 200.0;
    double ratio = 0.2;
};

// Per-pixel quick-shift feature rows [ratio*255*r, ratio*255*g, ratio*255*b, x, y].
// Single-channel images are replicated to three color components first.
struct PixelFeatures {
    int h = 0;
    int w = 0;
    int dim = 0;
    std::vector<double> values;  // h*w rows of dim doubles

    const double* row(int pixel) const {
        return values.data() + static_cast<std::size_t>(pixel) * dim;
    }
};

struct SuperpixelSegmentation {
    int height = 0;
    int width = 0;
    int n_segments = 0;
    std::vector<int> labels;     // height*width, each in [0, n_segments)
    std::vector<int> parent;     // tree parent after cutting; roots point to self
    std::vector<double> density;

    int label_at(int y, int x) const { return labels[static_cast<std::size_t>(y) * width + x]; }
};

PixelFeatures pixel_features(const Tensor& image, double ratio);

// density(p) = sum over the spatial window of radius ceil(3*kernel_size) of
// exp(-|f(p)-f(q)|^2 / (2*kernel_size^2)).
std::vector<double> estimate_density(const PixelFeatures& features, double kernel_size);

// Link each pixel to its nearest higher-density pixel in feature space
// (spatial search radius ceil(max_dist)), then cut links longer than
// max_dist. The surviving trees are the segments.
SuperpixelSegmentation link_and_cut(const PixelFeatures& features,
                                    const std::vector<double>& density, double max_dist);

SuperpixelSegmentation quickshift(const Tensor& image, const QuickShiftParams& params);

// Distinct-color rendering of the label map.
Tensor label_visualization(const SuperpixelSegmentation& seg);

// JSON {height, width, n_segments, rle: [[label, run], ...]} over raster order.
void write_segmentation_json(const std::filesystem::path& path,
                             const SuperpixelSegmentation& seg);

}  // namespace covidscreen
