#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "covidscreen/image.hpp"

namespace covidscreen {

struct Normalization {
    std::array<double, 3> mean{0.0, 0.0, 0.0};
    std::array<double, 3> stddev{1.0, 1.0, 1.0};
};

struct BackboneSpec {
    std::string name;
    int input_h = 0;
    int input_w = 0;
    int input_c = 0;
    int feature_dim = 0;
    Normalization normalization;
    std::string weights_source;  // "scratch" when no stored weights are needed
};

// Registered backbone identities. TinyCNN is the built-in trainable-from-
// scratch entry; the pre-trained ones resolve their parameters through the
// weights directory (COVIDSCREEN_WEIGHTS_DIR).
const std::vector<BackboneSpec>& backbone_registry();
const BackboneSpec& find_backbone(const std::string& name);

// Piecewise-linear activation: x for x >= 0, 0.01*x otherwise.
double leaky_relu(double x);
Tensor leaky_relu(const Tensor& t);

// Discrete 2-D convolution of single-channel grids over the valid region,
//   out(i,j) = sum_{m,n} k(m,n) * x(i-m, j-n),
// flipped-kernel convention, optional stride. Inputs must have one channel.
Tensor conv2d_reference(const Tensor& x, const Tensor& kernel, int stride = 1);

// ---------------------------------------------------------------------------
// Feature-extractor layers

enum class LayerKind { conv, activation, maxpool, global_avg_pool };

class Layer {
public:
    virtual ~Layer() = default;
    virtual LayerKind kind() const = 0;
    const std::string& name() const { return name_; }
    virtual Tensor forward(const Tensor& in) const = 0;
    // Gradient with respect to the layer input, given the layer input and the
    // gradient at the layer output.
    virtual Tensor backward(const Tensor& in, const Tensor& grad_out) const = 0;
    virtual std::span<const double> parameters() const { return {}; }

protected:
    explicit Layer(std::string name) : name_(std::move(name)) {}

private:
    std::string name_;
};

class ConvLayer : public Layer {
public:
    // weights laid out [out_ch][in_ch][k][k], flipped-kernel convolution,
    // stride 1, valid padding.
    ConvLayer(std::string name, int in_ch, int out_ch, int kernel,
              std::vector<double> weights, std::vector<double> bias);

    LayerKind kind() const override { return LayerKind::conv; }
    Tensor forward(const Tensor& in) const override;
    Tensor backward(const Tensor& in, const Tensor& grad_out) const override;
    std::span<const double> parameters() const override;

    int in_channels() const { return in_ch_; }
    int out_channels() const { return out_ch_; }
    int kernel() const { return kernel_; }
    std::span<const double> weights() const { return weights_; }
    std::span<const double> bias() const { return bias_; }

private:
    int in_ch_, out_ch_, kernel_;
    std::vector<double> weights_;
    std::vector<double> bias_;
    std::vector<double> packed_;  // weights ++ bias, for parameters()
};

class ActivationLayer : public Layer {
public:
    explicit ActivationLayer(std::string name) : Layer(std::move(name)) {}
    LayerKind kind() const override { return LayerKind::activation; }
    Tensor forward(const Tensor& in) const override;
    Tensor backward(const Tensor& in, const Tensor& grad_out) const override;
};

class MaxPoolLayer : public Layer {
public:
    MaxPoolLayer(std::string name, int size);
    LayerKind kind() const override { return LayerKind::maxpool; }
    Tensor forward(const Tensor& in) const override;
    Tensor backward(const Tensor& in, const Tensor& grad_out) const override;
    int size() const { return size_; }

private:
    int size_;
};

class GlobalAvgPoolLayer : public Layer {
public:
    explicit GlobalAvgPoolLayer(std::string name) : Layer(std::move(name)) {}
    LayerKind kind() const override { return LayerKind::global_avg_pool; }
    Tensor forward(const Tensor& in) const override;
    Tensor backward(const Tensor& in, const Tensor& grad_out) const override;
};

// A frozen sequential feature extractor ending in global average pooling.
class ConvNet {
public:
    ConvNet() = default;
    explicit ConvNet(std::vector<std::unique_ptr<Layer>> layers);

    const std::vector<std::unique_ptr<Layer>>& layers() const { return layers_; }
    int layer_index(const std::string& name) const;  // -1 when absent
    std::vector<std::string> layer_names() const;

    Tensor forward(const Tensor& in) const;
    // Activations after every layer (trace[i] is the output of layers_[i]).
    std::vector<Tensor> forward_trace(const Tensor& in) const;
    // Propagate a gradient at the network output back to the output of
    // layers_[target]; trace must come from forward_trace on `input`.
    Tensor backward_to(int target, const Tensor& input, const std::vector<Tensor>& trace,
                       Tensor grad) const;

    std::vector<double> features(const Tensor& in) const;
    std::uint64_t checksum() const;

    nlohmann::json to_json() const;
    static ConvNet from_json(const nlohmann::json& j);

private:
    std::vector<std::unique_ptr<Layer>> layers_;
};

// ---------------------------------------------------------------------------
// Classification head: d1 -> activation -> d2 -> activation -> d3 -> softmax

struct DenseLayer {
    int in = 0;
    int out = 0;
    std::vector<double> w;  // row-major [out][in]
    std::vector<double> b;
};

struct HeadCache {
    std::vector<double> input;
    std::vector<double> a1;  // post-activation of d1
    std::vector<double> a2;  // post-activation of d2
    std::vector<double> z1, z2;
    std::vector<double> logits;
    std::array<double, 2> probs{0.0, 0.0};
};

class DenseHead {
public:
    DenseHead() = default;
    DenseHead(int feature_dim, int width1, int width2, std::mt19937_64& rng);

    std::array<double, 2> forward(std::span<const double> features,
                                  HeadCache* cache = nullptr) const;
    // Backprop from dL/dlogits; accumulates parameter gradients into `grads`
    // (same shape as *this) and returns dL/dfeatures.
    std::vector<double> backward(const HeadCache& cache, std::span<const double> dlogits,
                                 DenseHead& grads) const;

    DenseHead zeros_like() const;
    std::array<DenseLayer*, 3> dense() { return {&d1_, &d2_, &d3_}; }
    std::array<const DenseLayer*, 3> dense() const { return {&d1_, &d2_, &d3_}; }
    std::size_t parameter_count() const;

    nlohmann::json to_json() const;
    static DenseHead from_json(const nlohmann::json& j);

private:
    DenseLayer d1_, d2_, d3_;
};

std::array<double, 2> softmax2(std::span<const double> logits);

// ---------------------------------------------------------------------------

class ClassifierModel {
public:
    ClassifierModel() = default;
    ClassifierModel(BackboneSpec spec, ConvNet backbone, DenseHead head);

    const BackboneSpec& spec() const { return spec_; }
    const ConvNet& backbone() const { return backbone_; }
    DenseHead& head() { return head_; }
    const DenseHead& head() const { return head_; }

    std::vector<double> features(const Tensor& preprocessed) const;
    std::array<double, 2> predict_one(const Tensor& preprocessed) const;
    // N x 2 probability matrix; rows sum to 1 within 1e-6. Batch entries are
    // evaluated in parallel.
    std::vector<std::array<double, 2>> predict_proba(std::span<const Tensor> batch) const;

    std::uint64_t backbone_checksum() const { return backbone_.checksum(); }

    void save(const std::filesystem::path& path) const;
    static ClassifierModel load(const std::filesystem::path& path);

private:
    void check_input(const Tensor& t) const;

    BackboneSpec spec_;
    ConvNet backbone_;
    DenseHead head_;
};

// Builds a classifier with the given trainable head widths. TinyCNN backbones
// are initialized from `seed`; every other backbone loads its parameters from
// "<weights_source>.json" (':' mapped to '_') under COVIDSCREEN_WEIGHTS_DIR
// and fails with an error naming the weights source when unavailable.
ClassifierModel build_classifier(const BackboneSpec& spec, std::pair<int, int> head_widths,
                                 std::uint64_t seed = 0);
ClassifierModel build_classifier(const std::string& backbone_name,
                                 std::pair<int, int> head_widths, std::uint64_t seed = 0);

// Weights directory resolution (COVIDSCREEN_WEIGHTS_DIR, default "weights").
std::filesystem::path weights_directory();
std::filesystem::path weights_file_for(const BackboneSpec& spec);

}  // namespace covidscreen
