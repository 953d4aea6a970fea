#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "covidscreen/image.hpp"
#include "covidscreen/model.hpp"
#include "covidscreen/training.hpp"

namespace covidscreen {

// One normalized activation map: H x W x 1 with min 0 and max 1, except
// degenerate (constant) maps which stay all-zero and are flagged.
struct Heatmap {
    std::string layer;
    Tensor map;
    bool all_zero = false;
};

using HeatmapStack = std::vector<Heatmap>;

// Channel-mean of the post-activation feature map of each selected backbone
// layer, bilinearly upsampled to the model input size and min-max normalized.
// An empty selection takes every layer. Unknown names raise an error listing
// the available layers.
HeatmapStack activation_maps(const ClassifierModel& model, const Tensor& preprocessed,
                             const std::vector<std::string>& layer_selection = {});

// Gradient-weighted class activation map at a convolutional layer: channel
// weights are the spatial means of d(logit[class_index])/d(activation); the
// map is the rectified weighted channel sum, normalized to [0,1].
Heatmap gradient_weighted_map(const ClassifierModel& model, const Tensor& preprocessed,
                              int class_index, const std::string& layer);

// Alpha-blends `map` (values in [0,1], resized to the image if needed) over
// the image under the named colormap ("jet" or "gray") and writes a PNG.
void render_overlay(const Tensor& image, const Tensor& map, const std::string& colormap,
                    const std::filesystem::path& output_path);

// One accuracy plot and one loss plot, each a panel grid with one panel per
// trace carrying the train and validation curves. Returns the two file paths
// (<prefix>_accuracy.png, <prefix>_loss.png) under out_dir.
std::vector<std::filesystem::path> plot_traces(const std::vector<EpochTrace>& traces,
                                               const std::vector<std::string>& labels,
                                               const std::filesystem::path& out_dir,
                                               const std::string& prefix);

}  // namespace covidscreen
