#include "covidscreen/explain.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "covidscreen/dataset.hpp"

namespace covidscreen {

using nlohmann::json;

std::vector<std::uint8_t> sample_perturbations(int K, int N, std::uint64_t seed) {
    if (K < 1) throw std::invalid_argument("need at least one superpixel");
    if (N < 2) throw std::invalid_argument("need at least two perturbations (row 0 is identity)");
    std::vector<std::uint8_t> masks(static_cast<std::size_t>(N) * K);
    std::fill_n(masks.begin(), K, std::uint8_t{1});
    std::mt19937_64 rng(seed);
    std::bernoulli_distribution coin(0.5);
    for (std::size_t i = K; i < masks.size(); ++i) masks[i] = coin(rng) ? 1 : 0;
    return masks;
}

Tensor apply_perturbation(const Tensor& image, const SuperpixelSegmentation& seg,
                          std::span<const std::uint8_t> mask, FillPolicy fill) {
    if (image.height() != seg.height || image.width() != seg.width) {
        throw std::invalid_argument("segmentation does not match image size");
    }
    if (static_cast<int>(mask.size()) != seg.n_segments) {
        throw std::invalid_argument("mask length " + std::to_string(mask.size()) +
                                    " does not match segment count " +
                                    std::to_string(seg.n_segments));
    }

    const int channels = image.channels();
    std::vector<double> fill_color(static_cast<std::size_t>(seg.n_segments) * channels, 0.0);
    if (fill == FillPolicy::mean_color) {
        std::vector<std::int64_t> count(seg.n_segments, 0);
        for (int y = 0; y < image.height(); ++y)
            for (int x = 0; x < image.width(); ++x) {
                const int label = seg.label_at(y, x);
                ++count[label];
                for (int c = 0; c < channels; ++c)
                    fill_color[static_cast<std::size_t>(label) * channels + c] +=
                        image.at(y, x, c);
            }
        for (int s = 0; s < seg.n_segments; ++s)
            for (int c = 0; c < channels; ++c)
                fill_color[static_cast<std::size_t>(s) * channels + c] /=
                    static_cast<double>(count[s]);
    }

    Tensor out = image;
    for (int y = 0; y < image.height(); ++y)
        for (int x = 0; x < image.width(); ++x) {
            const int label = seg.label_at(y, x);
            if (mask[label]) continue;
            for (int c = 0; c < channels; ++c)
                out.at(y, x, c) = fill_color[static_cast<std::size_t>(label) * channels + c];
        }
    return out;
}

DistanceWeight perturbation_weight(std::span<const std::uint8_t> mask, double kernel_width) {
    if (!(kernel_width > 0.0)) throw std::invalid_argument("kernel_width must be > 0");
    if (mask.empty()) throw std::invalid_argument("empty mask");
    const auto ones = static_cast<double>(
        std::count(mask.begin(), mask.end(), std::uint8_t{1}));
    const double K = static_cast<double>(mask.size());
    // cos(mask, 1) = m / (sqrt(m) * sqrt(K)) = sqrt(m/K); undefined at m=0.
    const double d = ones == 0.0 ? 1.0 : 1.0 - std::sqrt(ones / K);
    return {d, std::exp(-d * d / (kernel_width * kernel_width))};
}

SurrogateFit fit_surrogate(const PerturbationBatch& batch, int class_index) {
    if (class_index < 0 || class_index > 1) {
        throw std::invalid_argument("class_index must be 0 or 1");
    }
    if (batch.n < 1 || batch.k < 1) throw std::invalid_argument("empty perturbation batch");
    if (static_cast<int>(batch.predictions.size()) != batch.n ||
        static_cast<int>(batch.weights.size()) != batch.n) {
        throw std::invalid_argument("batch arrays do not match n");
    }

    constexpr double lambda = 1e-6;
    const int dim = batch.k + 1;  // intercept first

    // Normal equations A beta = rhs with A = Z^T W Z + lambda*I (intercept
    // unpenalized), accumulated directly from the mask rows.
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(dim, dim);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(dim);
    Eigen::VectorXd z(dim);
    for (int i = 0; i < batch.n; ++i) {
        z(0) = 1.0;
        const auto row = batch.mask_row(i);
        for (int j = 0; j < batch.k; ++j) z(j + 1) = static_cast<double>(row[j]);
        const double w = batch.weights[i];
        const double y = batch.predictions[i][class_index];
        A.noalias() += w * z * z.transpose();
        rhs.noalias() += (w * y) * z;
    }
    for (int j = 1; j < dim; ++j) A(j, j) += lambda;

    Eigen::LDLT<Eigen::MatrixXd> solver(A);
    if (solver.info() != Eigen::Success) {
        throw std::runtime_error("surrogate normal equations are singular");
    }
    Eigen::VectorXd beta = solver.solve(rhs);
    if (!beta.allFinite()) {
        throw std::runtime_error("surrogate solve produced non-finite coefficients");
    }

    SurrogateFit fit;
    fit.intercept = beta(0);
    fit.coefficients.assign(beta.data() + 1, beta.data() + dim);
    return fit;
}

Explanation explain(const PredictFn& black_box, const Tensor& image,
                    const QuickShiftParams& seg_params, const LimeParams& lime_params) {
    if (lime_params.top_k < 1) throw std::invalid_argument("top_k must be >= 1");

    const SuperpixelSegmentation seg = quickshift(image, seg_params);
    const int K = seg.n_segments;

    PerturbationBatch batch;
    batch.n = lime_params.n_perturbations;
    batch.k = K;
    batch.seed = lime_params.seed;
    batch.masks = sample_perturbations(K, batch.n, lime_params.seed);
    batch.predictions.resize(batch.n);
    batch.distances.resize(batch.n);
    batch.weights.resize(batch.n);

#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < batch.n; ++i) {
        const auto mask = batch.mask_row(i);
        const Tensor perturbed =
            i == 0 ? image : apply_perturbation(image, seg, mask, lime_params.fill);
        batch.predictions[i] = black_box(perturbed);
        const DistanceWeight dw = perturbation_weight(mask, lime_params.kernel_width);
        batch.distances[i] = dw.distance;
        batch.weights[i] = dw.weight;
    }

    Explanation result;
    result.seed = lime_params.seed;
    result.n_segments = K;
    result.degenerate = K == 1;
    result.explained_class = batch.predictions[0][1] > batch.predictions[0][0] ? 1 : 0;

    const SurrogateFit fit = fit_surrogate(batch, result.explained_class);
    result.coefficients = fit.coefficients;
    result.intercept = fit.intercept;

    std::vector<int> order(K);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return result.coefficients[a] > result.coefficients[b];
    });
    const int k = std::min(lime_params.top_k, K);
    result.top_features.assign(order.begin(), order.begin() + k);

    result.overlay_mask = Tensor(seg.height, seg.width, 1);
    std::vector<std::uint8_t> selected(K, 0);
    for (int id : result.top_features) selected[id] = 1;
    for (int y = 0; y < seg.height; ++y)
        for (int x = 0; x < seg.width; ++x)
            result.overlay_mask.at(y, x, 0) = selected[seg.label_at(y, x)] ? 1.0 : 0.0;
    return result;
}

Explanation explain(const ClassifierModel& model, const Tensor& image,
                    const QuickShiftParams& seg_params, const LimeParams& lime_params) {
    const PredictFn black_box = [&model](const Tensor& img) {
        ImageSample sample;
        sample.pixels = img;
        return model.predict_one(preprocess(sample, model.spec()));
    };
    return explain(black_box, image, seg_params, lime_params);
}

json Explanation::to_json() const {
    return json{{"class", explained_class},
                {"coefficients", coefficients},
                {"intercept", intercept},
                {"top_features", top_features},
                {"n_segments", n_segments},
                {"degenerate", degenerate},
                {"seed", seed}};
}

void Explanation::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write explanation " + path.string());
    out << to_json().dump(2) << '\n';
}

}  // namespace covidscreen
