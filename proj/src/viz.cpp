#include "covidscreen/viz.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "covidscreen/imageio.hpp"

namespace covidscreen {

namespace {

Tensor channel_mean(const Tensor& t) {
    Tensor out(t.height(), t.width(), 1);
    const double inv = 1.0 / static_cast<double>(t.channels());
    for (int y = 0; y < t.height(); ++y)
        for (int x = 0; x < t.width(); ++x) {
            double acc = 0.0;
            for (int c = 0; c < t.channels(); ++c) acc += t.at(y, x, c);
            out.at(y, x, 0) = acc * inv;
        }
    return out;
}

// Min-max to [0,1]; constant maps collapse to all-zero and report it.
bool normalize_map(Tensor& map) {
    const auto [lo, hi] = value_range(map);
    if (hi - lo <= 0.0) {
        for (double& v : map.values()) v = 0.0;
        return true;
    }
    const double inv = 1.0 / (hi - lo);
    for (double& v : map.values()) v = (v - lo) * inv;
    return false;
}

struct Rgb {
    double r, g, b;
};

// Piecewise-linear jet: blue -> cyan -> yellow -> red over [0,1].
Rgb jet(double v) {
    v = std::clamp(v, 0.0, 1.0);
    const double r = std::clamp(1.5 - std::abs(4.0 * v - 3.0), 0.0, 1.0);
    const double g = std::clamp(1.5 - std::abs(4.0 * v - 2.0), 0.0, 1.0);
    const double b = std::clamp(1.5 - std::abs(4.0 * v - 1.0), 0.0, 1.0);
    return {r, g, b};
}

Rgb gray(double v) {
    v = std::clamp(v, 0.0, 1.0);
    return {v, v, v};
}

Rgb apply_colormap(const std::string& name, double v) {
    if (name == "jet") return jet(v);
    if (name == "gray") return gray(v);
    throw std::invalid_argument("unknown colormap '" + name + "' (jet, gray)");
}

const Tensor& backbone_activation(const std::vector<Tensor>& trace, int index) {
    return trace[static_cast<std::size_t>(index)];
}

[[noreturn]] void throw_unknown_layer(const ConvNet& net, const std::string& layer) {
    std::ostringstream msg;
    msg << "unknown layer '" << layer << "'; available:";
    for (const auto& name : net.layer_names()) msg << ' ' << name;
    throw std::invalid_argument(msg.str());
}

}  // namespace

HeatmapStack activation_maps(const ClassifierModel& model, const Tensor& preprocessed,
                             const std::vector<std::string>& layer_selection) {
    const ConvNet& net = model.backbone();
    std::vector<std::string> selection = layer_selection;
    if (selection.empty()) selection = net.layer_names();

    std::vector<int> indices;
    indices.reserve(selection.size());
    for (const auto& name : selection) {
        const int idx = net.layer_index(name);
        if (idx < 0) throw_unknown_layer(net, name);
        indices.push_back(idx);
    }

    const std::vector<Tensor> trace = net.forward_trace(preprocessed);
    HeatmapStack stack;
    stack.reserve(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        Tensor map = channel_mean(backbone_activation(trace, indices[i]));
        map = resize_bilinear(map, preprocessed.height(), preprocessed.width());
        Heatmap h;
        h.layer = selection[i];
        h.all_zero = normalize_map(map);
        h.map = std::move(map);
        stack.push_back(std::move(h));
    }
    return stack;
}

Heatmap gradient_weighted_map(const ClassifierModel& model, const Tensor& preprocessed,
                              int class_index, const std::string& layer) {
    if (class_index < 0 || class_index > 1) {
        throw std::invalid_argument("class_index must be 0 or 1");
    }
    const ConvNet& net = model.backbone();
    const int target = net.layer_index(layer);
    if (target < 0) throw_unknown_layer(net, layer);
    if (net.layers()[target]->kind() != LayerKind::conv) {
        throw std::invalid_argument("layer '" + layer +
                                    "' is not convolutional; gradients are weighted over a "
                                    "conv layer's channels");
    }

    const std::vector<Tensor> trace = net.forward_trace(preprocessed);
    const Tensor& features_tensor = trace.back();

    HeadCache cache;
    std::vector<double> features(features_tensor.values().begin(),
                                 features_tensor.values().end());
    model.head().forward(features, &cache);

    // d(logit[class]) / d(logits) is one-hot; backprop through the head, then
    // through the backbone down to the target layer's output.
    std::array<double, 2> dlogits{0.0, 0.0};
    dlogits[class_index] = 1.0;
    DenseHead scratch = model.head().zeros_like();
    const std::vector<double> dfeat = model.head().backward(cache, dlogits, scratch);

    Tensor grad(features_tensor.height(), features_tensor.width(), features_tensor.channels());
    std::copy(dfeat.begin(), dfeat.end(), grad.values().begin());
    grad = net.backward_to(target, preprocessed, trace, std::move(grad));

    const Tensor& activation = backbone_activation(trace, target);
    const int channels = activation.channels();
    std::vector<double> weights(channels, 0.0);
    const double inv_area = 1.0 / (static_cast<double>(grad.height()) * grad.width());
    for (int c = 0; c < channels; ++c) {
        double acc = 0.0;
        for (int y = 0; y < grad.height(); ++y)
            for (int x = 0; x < grad.width(); ++x) acc += grad.at(y, x, c);
        weights[c] = acc * inv_area;
    }

    Tensor map(activation.height(), activation.width(), 1);
    for (int y = 0; y < activation.height(); ++y)
        for (int x = 0; x < activation.width(); ++x) {
            double acc = 0.0;
            for (int c = 0; c < channels; ++c) acc += weights[c] * activation.at(y, x, c);
            map.at(y, x, 0) = std::max(acc, 0.0);  // rectify
        }
    map = resize_bilinear(map, preprocessed.height(), preprocessed.width());

    Heatmap h;
    h.layer = layer;
    h.all_zero = normalize_map(map);
    h.map = std::move(map);
    return h;
}

void render_overlay(const Tensor& image, const Tensor& map, const std::string& colormap,
                    const std::filesystem::path& output_path) {
    apply_colormap(colormap, 0.0);  // validate the name before any work
    if (image.empty() || map.empty()) throw std::invalid_argument("empty image or map");

    Tensor rgb = image.channels() == 1 ? replicate_to_rgb(image) : image;
    if (rgb.channels() != 3) throw std::invalid_argument("overlay base must be 1- or 3-channel");
    Tensor m = map;
    if (m.channels() != 1) m = channel_mean(m);
    if (m.height() != rgb.height() || m.width() != rgb.width()) {
        m = resize_bilinear(m, rgb.height(), rgb.width());
    }

    constexpr double alpha = 0.45;
    Tensor out(rgb.height(), rgb.width(), 3);
    for (int y = 0; y < rgb.height(); ++y)
        for (int x = 0; x < rgb.width(); ++x) {
            const Rgb tint = apply_colormap(colormap, m.at(y, x, 0));
            out.at(y, x, 0) = (1.0 - alpha) * rgb.at(y, x, 0) + alpha * tint.r;
            out.at(y, x, 1) = (1.0 - alpha) * rgb.at(y, x, 1) + alpha * tint.g;
            out.at(y, x, 2) = (1.0 - alpha) * rgb.at(y, x, 2) + alpha * tint.b;
        }
    write_png(output_path, out);
}

// ---------------------------------------------------------------------------
// Trace plots: a tiny software rasterizer, enough for panel grids of
// train/validation curves.

namespace {

constexpr int kPanelW = 320;
constexpr int kPanelH = 240;
constexpr int kMargin = 32;

void put_pixel(Tensor& canvas, int x, int y, const Rgb& color) {
    if (x < 0 || y < 0 || x >= canvas.width() || y >= canvas.height()) return;
    canvas.at(y, x, 0) = color.r;
    canvas.at(y, x, 1) = color.g;
    canvas.at(y, x, 2) = color.b;
}

void draw_line(Tensor& canvas, double x0, double y0, double x1, double y1, const Rgb& color) {
    const double steps = std::max({std::abs(x1 - x0), std::abs(y1 - y0), 1.0});
    const int n = static_cast<int>(std::ceil(steps));
    for (int i = 0; i <= n; ++i) {
        const double t = static_cast<double>(i) / n;
        put_pixel(canvas, static_cast<int>(std::lround(x0 + t * (x1 - x0))),
                  static_cast<int>(std::lround(y0 + t * (y1 - y0))), color);
    }
}

// Polyline of one series inside a panel whose value range is [lo, hi].
void draw_series(Tensor& canvas, int panel_x, int panel_y, const std::vector<double>& series,
                 double lo, double hi, const Rgb& color) {
    if (series.empty()) return;
    const double x_left = panel_x + kMargin;
    const double x_right = panel_x + kPanelW - kMargin / 2;
    const double y_top = panel_y + kMargin / 2;
    const double y_bottom = panel_y + kPanelH - kMargin;
    const double span = hi - lo > 0.0 ? hi - lo : 1.0;
    const std::size_t n = series.size();
    auto px = [&](std::size_t i) {
        return n == 1 ? (x_left + x_right) / 2.0
                      : x_left + (x_right - x_left) * static_cast<double>(i) /
                                     static_cast<double>(n - 1);
    };
    auto py = [&](double v) { return y_bottom - (v - lo) / span * (y_bottom - y_top); };
    for (std::size_t i = 0; i + 1 < n; ++i) {
        draw_line(canvas, px(i), py(series[i]), px(i + 1), py(series[i + 1]), color);
    }
    if (n == 1) put_pixel(canvas, static_cast<int>(px(0)), static_cast<int>(py(series[0])), color);
}

void draw_panel_frame(Tensor& canvas, int panel_x, int panel_y) {
    const Rgb frame{0.25, 0.25, 0.25};
    const int x0 = panel_x + kMargin, x1 = panel_x + kPanelW - kMargin / 2;
    const int y0 = panel_y + kMargin / 2, y1 = panel_y + kPanelH - kMargin;
    draw_line(canvas, x0, y0, x1, y0, frame);
    draw_line(canvas, x0, y1, x1, y1, frame);
    draw_line(canvas, x0, y0, x0, y1, frame);
    draw_line(canvas, x1, y0, x1, y1, frame);
}

}  // namespace

std::vector<std::filesystem::path> plot_traces(const std::vector<EpochTrace>& traces,
                                               const std::vector<std::string>& labels,
                                               const std::filesystem::path& out_dir,
                                               const std::string& prefix) {
    if (traces.empty()) throw std::invalid_argument("no traces to plot");
    if (labels.size() != traces.size()) {
        throw std::invalid_argument("labels do not match traces");
    }
    for (const auto& t : traces) {
        if (t.epochs() == 0) throw std::invalid_argument("empty epoch trace");
    }
    std::filesystem::create_directories(out_dir);

    const int n = static_cast<int>(traces.size());
    const int cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n))));
    const int rows = (n + cols - 1) / cols;

    const Rgb train_color{0.12, 0.35, 0.80};
    const Rgb val_color{0.85, 0.45, 0.10};

    auto render = [&](bool accuracy) {
        Tensor canvas(rows * kPanelH, cols * kPanelW, 3, 1.0);  // white background
        for (int i = 0; i < n; ++i) {
            const int px = (i % cols) * kPanelW;
            const int py = (i / cols) * kPanelH;
            draw_panel_frame(canvas, px, py);
            const auto& tr = accuracy ? traces[i].train_accuracy : traces[i].train_loss;
            const auto& va = accuracy ? traces[i].val_accuracy : traces[i].val_loss;
            double lo = 0.0, hi = 1.0;
            if (!accuracy) {
                hi = 0.0;
                for (double v : tr) hi = std::max(hi, v);
                for (double v : va) hi = std::max(hi, v);
                if (hi <= 0.0) hi = 1.0;
            }
            draw_series(canvas, px, py, tr, lo, hi, train_color);
            draw_series(canvas, px, py, va, lo, hi, val_color);
        }
        return canvas;
    };

    const auto acc_path = out_dir / (prefix + "_accuracy.png");
    const auto loss_path = out_dir / (prefix + "_loss.png");
    write_png(acc_path, render(true));
    write_png(loss_path, render(false));
    return {acc_path, loss_path};
}

}  // namespace covidscreen
