#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "covidscreen/image.hpp"
#include "covidscreen/model.hpp"
#include "covidscreen/segmentation.hpp"

namespace covidscreen {

enum class FillPolicy { mean_color, zero };

struct LimeParams {
    int n_perturbations = 150;
    double kernel_width = 0.25;
    int top_k = 4;
    FillPolicy fill = FillPolicy::mean_color;
    std::uint64_t seed = 0;
};

// One LIME sampling round over K superpixels. Row 0 is always the all-ones
// mask (the unperturbed image) with distance 0 and weight 1.
struct PerturbationBatch {
    int n = 0;
    int k = 0;
    std::vector<std::uint8_t> masks;  // n*k, row-major
    std::vector<std::array<double, 2>> predictions;
    std::vector<double> distances;
    std::vector<double> weights;
    std::uint64_t seed = 0;

    std::span<const std::uint8_t> mask_row(int i) const {
        return {masks.data() + static_cast<std::size_t>(i) * k, static_cast<std::size_t>(k)};
    }
};

struct Explanation {
    int explained_class = 0;
    std::vector<double> coefficients;  // one per superpixel, for explained_class
    double intercept = 0.0;
    std::vector<int> top_features;     // superpixel ids, descending coefficient
    Tensor overlay_mask;               // H x W x 1 binary, union of top features
    int n_segments = 0;
    bool degenerate = false;           // segmentation collapsed to one segment
    std::uint64_t seed = 0;

    nlohmann::json to_json() const;
    void save(const std::filesystem::path& path) const;
};

// N x K binary masks: row 0 all ones, the rest i.i.d. Bernoulli(0.5).
// Requires K >= 1 and N >= 2.
std::vector<std::uint8_t> sample_perturbations(int K, int N, std::uint64_t seed);

// Pixels of "on" superpixels pass through; "off" superpixels are filled with
// their own mean color (or zero under FillPolicy::zero).
Tensor apply_perturbation(const Tensor& image, const SuperpixelSegmentation& seg,
                          std::span<const std::uint8_t> mask,
                          FillPolicy fill = FillPolicy::mean_color);

// Cosine distance of a mask with m ones against the all-ones vector,
// d = 1 - sqrt(m/K), and its kernel weight exp(-d^2 / kernel_width^2).
// The all-zero mask has no cosine; it is pinned to d = 1.
struct DistanceWeight {
    double distance = 0.0;
    double weight = 1.0;
};
DistanceWeight perturbation_weight(std::span<const std::uint8_t> mask, double kernel_width);

// Weighted ridge least squares over the batch: minimizes
//   sum_i w_i (y_i - b0 - b.z_i)^2 + 1e-6 * |b|^2
// with the intercept unpenalized; y_i is the predicted probability of
// class_index.
struct SurrogateFit {
    std::vector<double> coefficients;
    double intercept = 0.0;
};
SurrogateFit fit_surrogate(const PerturbationBatch& batch, int class_index);

using PredictFn = std::function<std::array<double, 2>(const Tensor&)>;

// End-to-end LIME: quickshift -> sample -> apply -> predict -> weight ->
// fit -> top-k. The explained class is the black box's argmax on the
// unperturbed image.
Explanation explain(const PredictFn& black_box, const Tensor& image,
                    const QuickShiftParams& seg_params, const LimeParams& lime_params);

// Convenience wrapper: the black box is the model over its own preprocessing.
Explanation explain(const ClassifierModel& model, const Tensor& image,
                    const QuickShiftParams& seg_params, const LimeParams& lime_params);

}  // namespace covidscreen
