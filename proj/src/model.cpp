#include "covidscreen/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "covidscreen/kernels.hpp"

namespace covidscreen {

using nlohmann::json;

namespace {

constexpr Normalization kImagenetNorm{{0.485, 0.456, 0.406}, {0.229, 0.224, 0.225}};
constexpr Normalization kHalfNorm{{0.5, 0.5, 0.5}, {0.5, 0.5, 0.5}};

std::vector<BackboneSpec> make_registry() {
    // Input sizes and feature widths follow the canonical published
    // configurations of each architecture; the paper itself does not state
    // them. Weight payloads are sequential stacks resolved from the weights
    // directory at build time.
    return {
        {"VGG16", 224, 224, 3, 512, kImagenetNorm, "imagenet:vgg16"},
        {"InceptionResNetV2", 299, 299, 3, 1536, kImagenetNorm, "imagenet:inception_resnet_v2"},
        {"ResNet50", 224, 224, 3, 2048, kImagenetNorm, "imagenet:resnet50"},
        {"DenseNet201", 224, 224, 3, 1920, kImagenetNorm, "imagenet:densenet201"},
        {"VGG19", 224, 224, 3, 512, kImagenetNorm, "imagenet:vgg19"},
        {"MobileNetV2", 224, 224, 3, 1280, kImagenetNorm, "imagenet:mobilenetv2"},
        {"NasNetMobile", 224, 224, 3, 1056, kImagenetNorm, "imagenet:nasnetmobile"},
        {"ResNet15V2", 224, 224, 3, 2048, kImagenetNorm, "imagenet:resnet15v2"},
        {"TinyCNN", 32, 32, 3, 16, kHalfNorm, "scratch"},
    };
}

void require_single_channel(const Tensor& t, const char* what) {
    if (t.channels() != 1) {
        throw std::invalid_argument(std::string(what) + " must have exactly one channel");
    }
}

std::uint64_t fnv1a(std::uint64_t hash, std::span<const double> values) {
    constexpr std::uint64_t prime = 1099511628211ull;
    for (double v : values) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, sizeof bits);
        for (int i = 0; i < 8; ++i) {
            hash ^= (bits >> (8 * i)) & 0xffu;
            hash *= prime;
        }
    }
    return hash;
}

std::vector<double> he_normal(std::size_t count, std::size_t fan_in, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
    std::vector<double> out(count);
    for (double& v : out) v = dist(rng);
    return out;
}

DenseLayer make_dense(int in, int out, std::mt19937_64& rng) {
    DenseLayer d;
    d.in = in;
    d.out = out;
    d.w = he_normal(static_cast<std::size_t>(in) * out, in, rng);
    d.b.assign(out, 0.0);
    return d;
}

json dense_to_json(const DenseLayer& d) {
    return json{{"in", d.in}, {"out", d.out}, {"w", d.w}, {"b", d.b}};
}

DenseLayer dense_from_json(const json& j) {
    DenseLayer d;
    d.in = j.at("in").get<int>();
    d.out = j.at("out").get<int>();
    d.w = j.at("w").get<std::vector<double>>();
    d.b = j.at("b").get<std::vector<double>>();
    if (d.w.size() != static_cast<std::size_t>(d.in) * d.out ||
        d.b.size() != static_cast<std::size_t>(d.out)) {
        throw std::runtime_error("dense layer parameter counts do not match declared shape");
    }
    return d;
}

// Matrix-vector product y = W x + b for a row-major DenseLayer.
void dense_forward(const DenseLayer& d, std::span<const double> x, std::vector<double>& y) {
    y.assign(d.out, 0.0);
    for (int o = 0; o < d.out; ++o) {
        double acc = d.b[o];
        const double* row = d.w.data() + static_cast<std::size_t>(o) * d.in;
        for (int i = 0; i < d.in; ++i) acc += row[i] * x[i];
        y[o] = acc;
    }
}

// Accumulates dW, db into `g` and writes dL/dx.
void dense_backward(const DenseLayer& d, std::span<const double> x, std::span<const double> dy,
                    DenseLayer& g, std::vector<double>& dx) {
    dx.assign(d.in, 0.0);
    for (int o = 0; o < d.out; ++o) {
        const double* row = d.w.data() + static_cast<std::size_t>(o) * d.in;
        double* grow = g.w.data() + static_cast<std::size_t>(o) * d.in;
        g.b[o] += dy[o];
        for (int i = 0; i < d.in; ++i) {
            grow[i] += dy[o] * x[i];
            dx[i] += dy[o] * row[i];
        }
    }
}

}  // namespace

const std::vector<BackboneSpec>& backbone_registry() {
    static const std::vector<BackboneSpec> registry = make_registry();
    return registry;
}

const BackboneSpec& find_backbone(const std::string& name) {
    for (const auto& spec : backbone_registry()) {
        if (spec.name == name) return spec;
    }
    throw std::invalid_argument("unknown backbone '" + name + "'; see `backbones list`");
}

double leaky_relu(double x) { return x >= 0.0 ? x : 0.01 * x; }

Tensor leaky_relu(const Tensor& t) {
    Tensor out = t;
    for (double& v : out.values()) v = leaky_relu(v);
    return out;
}

Tensor conv2d_reference(const Tensor& x, const Tensor& kernel, int stride) {
    require_single_channel(x, "conv2d_reference input");
    require_single_channel(kernel, "conv2d_reference kernel");
    if (stride < 1) throw std::invalid_argument("stride must be >= 1");
    if (kernel.height() > x.height() || kernel.width() > x.width()) {
        throw std::invalid_argument("kernel larger than input");
    }
    kernels::ConvDims dims{x.height(), x.width(), kernel.height(), kernel.width(), stride};
    Tensor out(dims.out_h(), dims.out_w(), 1);
    kernels::conv2d_valid(x.values(), kernel.values(), dims, out.values());
    return out;
}

// ---------------------------------------------------------------------------
// Layers

ConvLayer::ConvLayer(std::string name, int in_ch, int out_ch, int kernel,
                     std::vector<double> weights, std::vector<double> bias)
    : Layer(std::move(name)), in_ch_(in_ch), out_ch_(out_ch), kernel_(kernel),
      weights_(std::move(weights)), bias_(std::move(bias)) {
    if (in_ch_ < 1 || out_ch_ < 1 || kernel_ < 1) {
        throw std::invalid_argument("conv layer dimensions must be positive");
    }
    const auto expected =
        static_cast<std::size_t>(out_ch_) * in_ch_ * kernel_ * kernel_;
    if (weights_.size() != expected || bias_.size() != static_cast<std::size_t>(out_ch_)) {
        throw std::invalid_argument("conv layer parameter counts do not match declared shape");
    }
    packed_.reserve(weights_.size() + bias_.size());
    packed_.insert(packed_.end(), weights_.begin(), weights_.end());
    packed_.insert(packed_.end(), bias_.begin(), bias_.end());
}

Tensor ConvLayer::forward(const Tensor& in) const {
    if (in.channels() != in_ch_) {
        throw std::invalid_argument("conv layer '" + name() + "' expects " +
                                    std::to_string(in_ch_) + " channels, got " +
                                    std::to_string(in.channels()));
    }
    if (in.height() < kernel_ || in.width() < kernel_) {
        throw std::invalid_argument("input smaller than kernel in conv layer '" + name() + "'");
    }
    kernels::ConvDims dims{in.height(), in.width(), kernel_, kernel_, 1};
    const int oh = dims.out_h(), ow = dims.out_w();
    const std::size_t plane = static_cast<std::size_t>(in.height()) * in.width();
    const std::size_t ksize = static_cast<std::size_t>(kernel_) * kernel_;

    std::vector<double> planes(plane * in_ch_);
    for (int y = 0; y < in.height(); ++y)
        for (int x = 0; x < in.width(); ++x)
            for (int c = 0; c < in_ch_; ++c)
                planes[c * plane + static_cast<std::size_t>(y) * in.width() + x] = in.at(y, x, c);

    Tensor out(oh, ow, out_ch_);
    const std::size_t out_plane = static_cast<std::size_t>(oh) * ow;
    std::vector<double> acc(out_plane), tmp(out_plane);
    for (int o = 0; o < out_ch_; ++o) {
        std::fill(acc.begin(), acc.end(), bias_[o]);
        for (int ci = 0; ci < in_ch_; ++ci) {
            std::span<const double> w(
                weights_.data() + (static_cast<std::size_t>(o) * in_ch_ + ci) * ksize, ksize);
            kernels::conv2d_valid({planes.data() + ci * plane, plane}, w, dims, tmp);
            for (std::size_t i = 0; i < out_plane; ++i) acc[i] += tmp[i];
        }
        for (int y = 0; y < oh; ++y)
            for (int x = 0; x < ow; ++x)
                out.at(y, x, o) = acc[static_cast<std::size_t>(y) * ow + x];
    }
    return out;
}

Tensor ConvLayer::backward(const Tensor& in, const Tensor& grad_out) const {
    const int kh = kernel_, kw = kernel_;
    const int oh = grad_out.height(), ow = grad_out.width();
    Tensor dx(in.height(), in.width(), in_ch_);
    // Forward reads in(y + kh-1-m, x + kw-1-n); invert the index map.
    for (int u = 0; u < in.height(); ++u) {
        for (int v = 0; v < in.width(); ++v) {
            for (int ci = 0; ci < in_ch_; ++ci) {
                double acc = 0.0;
                for (int m = 0; m < kh; ++m) {
                    const int y = u - (kh - 1) + m;
                    if (y < 0 || y >= oh) continue;
                    for (int n = 0; n < kw; ++n) {
                        const int x = v - (kw - 1) + n;
                        if (x < 0 || x >= ow) continue;
                        for (int o = 0; o < out_ch_; ++o) {
                            const std::size_t wi =
                                ((static_cast<std::size_t>(o) * in_ch_ + ci) * kh + m) * kw + n;
                            acc += weights_[wi] * grad_out.at(y, x, o);
                        }
                    }
                }
                dx.at(u, v, ci) = acc;
            }
        }
    }
    return dx;
}

std::span<const double> ConvLayer::parameters() const { return packed_; }

Tensor ActivationLayer::forward(const Tensor& in) const { return leaky_relu(in); }

Tensor ActivationLayer::backward(const Tensor& in, const Tensor& grad_out) const {
    Tensor dx = grad_out;
    auto src = in.values();
    auto dst = dx.values();
    for (std::size_t i = 0; i < dst.size(); ++i) {
        if (src[i] < 0.0) dst[i] *= 0.01;
    }
    return dx;
}

MaxPoolLayer::MaxPoolLayer(std::string name, int size) : Layer(std::move(name)), size_(size) {
    if (size_ < 1) throw std::invalid_argument("pool size must be >= 1");
}

Tensor MaxPoolLayer::forward(const Tensor& in) const {
    const int oh = in.height() / size_, ow = in.width() / size_;
    if (oh < 1 || ow < 1) {
        throw std::invalid_argument("input smaller than pool window in layer '" + name() + "'");
    }
    Tensor out(oh, ow, in.channels());
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x)
            for (int c = 0; c < in.channels(); ++c) {
                double best = in.at(y * size_, x * size_, c);
                for (int dy = 0; dy < size_; ++dy)
                    for (int dx = 0; dx < size_; ++dx)
                        best = std::max(best, in.at(y * size_ + dy, x * size_ + dx, c));
                out.at(y, x, c) = best;
            }
    return out;
}

Tensor MaxPoolLayer::backward(const Tensor& in, const Tensor& grad_out) const {
    Tensor dx(in.height(), in.width(), in.channels());
    // Gradient routes to the first (raster-order) maximum of each window.
    for (int y = 0; y < grad_out.height(); ++y)
        for (int x = 0; x < grad_out.width(); ++x)
            for (int c = 0; c < in.channels(); ++c) {
                int by = y * size_, bx = x * size_;
                double best = in.at(by, bx, c);
                for (int dy = 0; dy < size_; ++dy)
                    for (int dxx = 0; dxx < size_; ++dxx) {
                        const double v = in.at(y * size_ + dy, x * size_ + dxx, c);
                        if (v > best) {
                            best = v;
                            by = y * size_ + dy;
                            bx = x * size_ + dxx;
                        }
                    }
                dx.at(by, bx, c) += grad_out.at(y, x, c);
            }
    return dx;
}

Tensor GlobalAvgPoolLayer::forward(const Tensor& in) const {
    Tensor out(1, 1, in.channels());
    const double scale = 1.0 / (static_cast<double>(in.height()) * in.width());
    for (int c = 0; c < in.channels(); ++c) {
        double acc = 0.0;
        for (int y = 0; y < in.height(); ++y)
            for (int x = 0; x < in.width(); ++x) acc += in.at(y, x, c);
        out.at(0, 0, c) = acc * scale;
    }
    return out;
}

Tensor GlobalAvgPoolLayer::backward(const Tensor& in, const Tensor& grad_out) const {
    Tensor dx(in.height(), in.width(), in.channels());
    const double scale = 1.0 / (static_cast<double>(in.height()) * in.width());
    for (int c = 0; c < in.channels(); ++c) {
        const double g = grad_out.at(0, 0, c) * scale;
        for (int y = 0; y < in.height(); ++y)
            for (int x = 0; x < in.width(); ++x) dx.at(y, x, c) = g;
    }
    return dx;
}

// ---------------------------------------------------------------------------
// ConvNet

ConvNet::ConvNet(std::vector<std::unique_ptr<Layer>> layers) : layers_(std::move(layers)) {}

int ConvNet::layer_index(const std::string& name) const {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        if (layers_[i]->name() == name) return static_cast<int>(i);
    }
    return -1;
}

std::vector<std::string> ConvNet::layer_names() const {
    std::vector<std::string> names;
    names.reserve(layers_.size());
    for (const auto& l : layers_) names.push_back(l->name());
    return names;
}

Tensor ConvNet::forward(const Tensor& in) const {
    Tensor t = in;
    for (const auto& layer : layers_) t = layer->forward(t);
    return t;
}

std::vector<Tensor> ConvNet::forward_trace(const Tensor& in) const {
    std::vector<Tensor> trace;
    trace.reserve(layers_.size());
    const Tensor* cur = &in;
    for (const auto& layer : layers_) {
        trace.push_back(layer->forward(*cur));
        cur = &trace.back();
    }
    return trace;
}

Tensor ConvNet::backward_to(int target, const Tensor& input, const std::vector<Tensor>& trace,
                            Tensor grad) const {
    if (trace.size() != layers_.size()) {
        throw std::invalid_argument("activation trace does not match network depth");
    }
    if (target < -1 || target >= static_cast<int>(layers_.size())) {
        throw std::invalid_argument("backward target out of range");
    }
    for (int i = static_cast<int>(layers_.size()) - 1; i > target; --i) {
        const Tensor& layer_in = i == 0 ? input : trace[i - 1];
        grad = layers_[i]->backward(layer_in, grad);
    }
    return grad;
}

std::vector<double> ConvNet::features(const Tensor& in) const {
    Tensor out = forward(in);
    return {out.values().begin(), out.values().end()};
}

std::uint64_t ConvNet::checksum() const {
    std::uint64_t hash = 1469598103934665603ull;  // FNV offset basis
    for (const auto& layer : layers_) hash = fnv1a(hash, layer->parameters());
    return hash;
}

json ConvNet::to_json() const {
    json layers = json::array();
    for (const auto& layer : layers_) {
        switch (layer->kind()) {
            case LayerKind::conv: {
                const auto* c = static_cast<const ConvLayer*>(layer.get());
                layers.push_back(json{{"type", "conv"},
                                      {"name", c->name()},
                                      {"in", c->in_channels()},
                                      {"out", c->out_channels()},
                                      {"kernel", c->kernel()},
                                      {"weights", std::vector<double>(c->weights().begin(),
                                                                      c->weights().end())},
                                      {"bias", std::vector<double>(c->bias().begin(),
                                                                   c->bias().end())}});
                break;
            }
            case LayerKind::activation:
                layers.push_back(json{{"type", "activation"}, {"name", layer->name()}});
                break;
            case LayerKind::maxpool: {
                const auto* p = static_cast<const MaxPoolLayer*>(layer.get());
                layers.push_back(
                    json{{"type", "maxpool"}, {"name", p->name()}, {"size", p->size()}});
                break;
            }
            case LayerKind::global_avg_pool:
                layers.push_back(json{{"type", "gap"}, {"name", layer->name()}});
                break;
        }
    }
    return json{{"layers", std::move(layers)}};
}

ConvNet ConvNet::from_json(const json& j) {
    std::vector<std::unique_ptr<Layer>> layers;
    for (const auto& lj : j.at("layers")) {
        const std::string type = lj.at("type").get<std::string>();
        const std::string name = lj.value("name", type);
        if (type == "conv") {
            layers.push_back(std::make_unique<ConvLayer>(
                name, lj.at("in").get<int>(), lj.at("out").get<int>(),
                lj.at("kernel").get<int>(), lj.at("weights").get<std::vector<double>>(),
                lj.at("bias").get<std::vector<double>>()));
        } else if (type == "activation") {
            layers.push_back(std::make_unique<ActivationLayer>(name));
        } else if (type == "maxpool") {
            layers.push_back(std::make_unique<MaxPoolLayer>(name, lj.at("size").get<int>()));
        } else if (type == "gap") {
            layers.push_back(std::make_unique<GlobalAvgPoolLayer>(name));
        } else {
            throw std::runtime_error("unknown layer type '" + type + "' in weights payload");
        }
    }
    return ConvNet(std::move(layers));
}

// ---------------------------------------------------------------------------
// DenseHead

DenseHead::DenseHead(int feature_dim, int width1, int width2, std::mt19937_64& rng) {
    if (feature_dim < 1 || width1 < 1 || width2 < 1) {
        throw std::invalid_argument("head widths must be positive");
    }
    d1_ = make_dense(feature_dim, width1, rng);
    d2_ = make_dense(width1, width2, rng);
    d3_ = make_dense(width2, 2, rng);
}

std::array<double, 2> softmax2(std::span<const double> logits) {
    const double m = std::max(logits[0], logits[1]);
    const double e0 = std::exp(logits[0] - m);
    const double e1 = std::exp(logits[1] - m);
    const double z = e0 + e1;
    return {e0 / z, e1 / z};
}

std::array<double, 2> DenseHead::forward(std::span<const double> features,
                                         HeadCache* cache) const {
    if (static_cast<int>(features.size()) != d1_.in) {
        throw std::invalid_argument("feature vector length " + std::to_string(features.size()) +
                                    " does not match head input " + std::to_string(d1_.in));
    }
    std::vector<double> z1, z2, logits;
    dense_forward(d1_, features, z1);
    std::vector<double> a1(z1.size());
    for (std::size_t i = 0; i < z1.size(); ++i) a1[i] = leaky_relu(z1[i]);
    dense_forward(d2_, a1, z2);
    std::vector<double> a2(z2.size());
    for (std::size_t i = 0; i < z2.size(); ++i) a2[i] = leaky_relu(z2[i]);
    dense_forward(d3_, a2, logits);
    auto probs = softmax2(logits);
    if (cache) {
        cache->input.assign(features.begin(), features.end());
        cache->z1 = std::move(z1);
        cache->a1 = std::move(a1);
        cache->z2 = std::move(z2);
        cache->a2 = std::move(a2);
        cache->logits = std::move(logits);
        cache->probs = probs;
    }
    return probs;
}

std::vector<double> DenseHead::backward(const HeadCache& cache, std::span<const double> dlogits,
                                        DenseHead& grads) const {
    std::vector<double> da2, da1, dfeat;
    dense_backward(d3_, cache.a2, dlogits, *grads.dense()[2], da2);
    for (std::size_t i = 0; i < da2.size(); ++i) {
        if (cache.z2[i] < 0.0) da2[i] *= 0.01;
    }
    dense_backward(d2_, cache.a1, da2, *grads.dense()[1], da1);
    for (std::size_t i = 0; i < da1.size(); ++i) {
        if (cache.z1[i] < 0.0) da1[i] *= 0.01;
    }
    dense_backward(d1_, cache.input, da1, *grads.dense()[0], dfeat);
    return dfeat;
}

DenseHead DenseHead::zeros_like() const {
    DenseHead z;
    z.d1_ = {d1_.in, d1_.out, std::vector<double>(d1_.w.size(), 0.0),
             std::vector<double>(d1_.b.size(), 0.0)};
    z.d2_ = {d2_.in, d2_.out, std::vector<double>(d2_.w.size(), 0.0),
             std::vector<double>(d2_.b.size(), 0.0)};
    z.d3_ = {d3_.in, d3_.out, std::vector<double>(d3_.w.size(), 0.0),
             std::vector<double>(d3_.b.size(), 0.0)};
    return z;
}

std::size_t DenseHead::parameter_count() const {
    return d1_.w.size() + d1_.b.size() + d2_.w.size() + d2_.b.size() + d3_.w.size() +
           d3_.b.size();
}

json DenseHead::to_json() const {
    return json{{"d1", dense_to_json(d1_)}, {"d2", dense_to_json(d2_)},
                {"d3", dense_to_json(d3_)}};
}

DenseHead DenseHead::from_json(const json& j) {
    DenseHead h;
    h.d1_ = dense_from_json(j.at("d1"));
    h.d2_ = dense_from_json(j.at("d2"));
    h.d3_ = dense_from_json(j.at("d3"));
    if (h.d1_.out != h.d2_.in || h.d2_.out != h.d3_.in || h.d3_.out != 2) {
        throw std::runtime_error("head layers do not chain d1->d2->d3->2");
    }
    return h;
}

// ---------------------------------------------------------------------------
// ClassifierModel

ClassifierModel::ClassifierModel(BackboneSpec spec, ConvNet backbone, DenseHead head)
    : spec_(std::move(spec)), backbone_(std::move(backbone)), head_(std::move(head)) {}

void ClassifierModel::check_input(const Tensor& t) const {
    if (t.height() != spec_.input_h || t.width() != spec_.input_w ||
        t.channels() != spec_.input_c) {
        std::ostringstream msg;
        msg << "input shape (" << t.height() << "," << t.width() << "," << t.channels()
            << ") does not match backbone " << spec_.name << " (" << spec_.input_h << ","
            << spec_.input_w << "," << spec_.input_c << ")";
        throw std::invalid_argument(msg.str());
    }
}

std::vector<double> ClassifierModel::features(const Tensor& preprocessed) const {
    check_input(preprocessed);
    return backbone_.features(preprocessed);
}

std::array<double, 2> ClassifierModel::predict_one(const Tensor& preprocessed) const {
    return head_.forward(features(preprocessed));
}

std::vector<std::array<double, 2>> ClassifierModel::predict_proba(
    std::span<const Tensor> batch) const {
    for (const Tensor& t : batch) check_input(t);
    std::vector<std::array<double, 2>> out(batch.size());
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(batch.size()); ++i) {
        out[i] = head_.forward(backbone_.features(batch[i]));
    }
    return out;
}

void ClassifierModel::save(const std::filesystem::path& path) const {
    json j{{"format", "covidscreen-model"},
           {"version", 1},
           {"backbone_name", spec_.name},
           {"backbone", backbone_.to_json()},
           {"head", head_.to_json()}};
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write model file " + path.string());
    out << j.dump(2) << '\n';
}

ClassifierModel ClassifierModel::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read model file " + path.string());
    json j = json::parse(in);
    if (j.value("format", "") != "covidscreen-model") {
        throw std::runtime_error(path.string() + " is not a covidscreen model file");
    }
    const BackboneSpec& spec = find_backbone(j.at("backbone_name").get<std::string>());
    return ClassifierModel(spec, ConvNet::from_json(j.at("backbone")),
                           DenseHead::from_json(j.at("head")));
}

// ---------------------------------------------------------------------------
// Builders

std::filesystem::path weights_directory() {
    if (const char* dir = std::getenv("COVIDSCREEN_WEIGHTS_DIR")) {
        return std::filesystem::path(dir);
    }
    return std::filesystem::path("weights");
}

std::filesystem::path weights_file_for(const BackboneSpec& spec) {
    std::string stem = spec.weights_source;
    std::replace(stem.begin(), stem.end(), ':', '_');
    return weights_directory() / (stem + ".json");
}

namespace {

ConvNet build_tinycnn(std::mt19937_64& rng) {
    // 32x32x3 -> conv3x3(8) -> act -> pool4 -> conv3x3(16) -> act -> pool4 -> GAP
    std::vector<std::unique_ptr<Layer>> layers;
    layers.push_back(std::make_unique<ConvLayer>("conv1", 3, 8, 3, he_normal(8 * 3 * 9, 27, rng),
                                                 std::vector<double>(8, 0.0)));
    layers.push_back(std::make_unique<ActivationLayer>("act1"));
    layers.push_back(std::make_unique<MaxPoolLayer>("pool1", 4));
    layers.push_back(std::make_unique<ConvLayer>("conv2", 8, 16, 3, he_normal(16 * 8 * 9, 72, rng),
                                                 std::vector<double>(16, 0.0)));
    layers.push_back(std::make_unique<ActivationLayer>("act2"));
    layers.push_back(std::make_unique<MaxPoolLayer>("pool2", 4));
    layers.push_back(std::make_unique<GlobalAvgPoolLayer>("gap"));
    return ConvNet(std::move(layers));
}

// Tracks (h, w, c) through the stack; throws when a layer cannot accept the
// incoming shape.
std::array<int, 3> infer_output_shape(const ConvNet& net, std::array<int, 3> shape) {
    for (const auto& layer : net.layers()) {
        auto [h, w, c] = shape;
        switch (layer->kind()) {
            case LayerKind::conv: {
                const auto* cv = static_cast<const ConvLayer*>(layer.get());
                if (c != cv->in_channels()) {
                    throw std::runtime_error("layer '" + layer->name() + "' expects " +
                                             std::to_string(cv->in_channels()) +
                                             " channels, receives " + std::to_string(c));
                }
                shape = {h - cv->kernel() + 1, w - cv->kernel() + 1, cv->out_channels()};
                break;
            }
            case LayerKind::activation:
                break;
            case LayerKind::maxpool: {
                const auto* p = static_cast<const MaxPoolLayer*>(layer.get());
                shape = {h / p->size(), w / p->size(), c};
                break;
            }
            case LayerKind::global_avg_pool:
                shape = {1, 1, c};
                break;
        }
        if (shape[0] < 1 || shape[1] < 1) {
            throw std::runtime_error("layer '" + layer->name() +
                                     "' shrinks the spatial grid below 1x1");
        }
    }
    return shape;
}

ConvNet load_backbone_weights(const BackboneSpec& spec) {
    const auto path = weights_file_for(spec);
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("weights for " + spec.name + " unavailable: cannot read " +
                                 path.string() + " (source " + spec.weights_source +
                                 "); set COVIDSCREEN_WEIGHTS_DIR to the weights cache");
    }
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw std::runtime_error("weights for " + spec.name + " corrupt (source " +
                                 spec.weights_source + "): " + e.what());
    }
    ConvNet net = ConvNet::from_json(j);
    auto out = infer_output_shape(net, {spec.input_h, spec.input_w, spec.input_c});
    if (out[0] != 1 || out[1] != 1) {
        throw std::runtime_error("weights for " + spec.name + " (source " + spec.weights_source +
                                 ") do not end in a global pool: output " +
                                 std::to_string(out[0]) + "x" + std::to_string(out[1]));
    }
    if (out[2] != spec.feature_dim) {
        throw std::runtime_error("weights for " + spec.name + " (source " + spec.weights_source +
                                 ") produce " + std::to_string(out[2]) +
                                 " features, registry declares " +
                                 std::to_string(spec.feature_dim));
    }
    return net;
}

}  // namespace

ClassifierModel build_classifier(const BackboneSpec& spec, std::pair<int, int> head_widths,
                                 std::uint64_t seed) {
    find_backbone(spec.name);  // reject specs that bypass the registry
    std::mt19937_64 rng(seed);
    ConvNet backbone = spec.name == "TinyCNN" ? build_tinycnn(rng) : load_backbone_weights(spec);
    DenseHead head(spec.feature_dim, head_widths.first, head_widths.second, rng);
    return ClassifierModel(spec, std::move(backbone), std::move(head));
}

ClassifierModel build_classifier(const std::string& backbone_name,
                                 std::pair<int, int> head_widths, std::uint64_t seed) {
    return build_classifier(find_backbone(backbone_name), head_widths, seed);
}

}  // namespace covidscreen
