#include "covidscreen/segmentation.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "covidscreen/kernels.hpp"

namespace covidscreen {

PixelFeatures pixel_features(const Tensor& image, double ratio) {
    if (image.empty())
        throw std::invalid_argument("pixel_features: empty image");
    if (!(ratio > 0.0 && ratio <= 1.0))
        throw std::invalid_argument("pixel_features: ratio must lie in (0, 1]");
    if (image.channels() != 1 && image.channels() != 3)
        throw std::invalid_argument("pixel_features: expected 1 or 3 channels");

    PixelFeatures f;
    f.h = image.height();
    f.w = image.width();
    f.dim = 5;
    f.values.resize(static_cast<std::size_t>(f.h) * f.w * f.dim);
    const double scale = ratio * 255.0;
    std::size_t idx = 0;
    for (int y = 0; y < f.h; ++y)
        for (int x = 0; x < f.w; ++x) {
            const double r = image.at(y, x, 0);
            const double g = image.channels() == 3 ? image.at(y, x, 1) : r;
            const double b = image.channels() == 3 ? image.at(y, x, 2) : r;
            f.values[idx++] = scale * r;
            f.values[idx++] = scale * g;
            f.values[idx++] = scale * b;
            f.values[idx++] = static_cast<double>(x);
            f.values[idx++] = static_cast<double>(y);
        }
    return f;
}

std::vector<double> estimate_density(const PixelFeatures& features, double kernel_size) {
    return kernels::quickshift_density(features.values, features.h, features.w,
                                       features.dim, kernel_size);
}

SuperpixelSegmentation link_and_cut(const PixelFeatures& features,
                                    const std::vector<double>& density, double max_dist) {
    if (max_dist <= 0.0)
        throw std::invalid_argument("link_and_cut: max_dist must be positive");
    const int n = features.h * features.w;
    if (static_cast<int>(density.size()) != n)
        throw std::invalid_argument("link_and_cut: density/feature size mismatch");

    const int radius = std::max(1, static_cast<int>(std::ceil(max_dist)));
    const auto links = kernels::quickshift_parents(features.values, features.h, features.w,
                                                   features.dim, density, radius);

    SuperpixelSegmentation seg;
    seg.height = features.h;
    seg.width = features.w;
    seg.density = density;
    seg.parent.resize(n);
    for (int p = 0; p < n; ++p) {
        const auto& link = links[p];
        seg.parent[p] = (link.parent == -1 || link.dist > max_dist) ? p : link.parent;
    }

    // Resolve roots (trees are acyclic: parents strictly outrank children),
    // then number segments by the raster order of their root pixel.
    std::vector<int> root(n, -1);
    for (int p = 0; p < n; ++p) {
        int cur = p;
        while (root[cur] == -1 && seg.parent[cur] != cur) cur = seg.parent[cur];
        const int r = root[cur] == -1 ? cur : root[cur];
        cur = p;
        while (root[cur] == -1) {
            const int next = seg.parent[cur];
            root[cur] = r;
            if (next == cur) break;
            cur = next;
        }
    }
    seg.labels.assign(n, -1);
    std::vector<int> root_label(n, -1);
    int next_label = 0;
    for (int p = 0; p < n; ++p) {
        const int r = root[p];
        if (root_label[r] == -1) root_label[r] = next_label++;
        seg.labels[p] = root_label[r];
    }
    seg.n_segments = next_label;
    return seg;
}

SuperpixelSegmentation quickshift(const Tensor& image, const QuickShiftParams& params) {
    if (params.kernel_size <= 0.0)
        throw std::invalid_argument("quickshift: kernel_size must be positive");
    if (params.max_dist <= 0.0)
        throw std::invalid_argument("quickshift: max_dist must be positive");
    const PixelFeatures features = pixel_features(image, params.ratio);
    const std::vector<double> density = estimate_density(features, params.kernel_size);
    return link_and_cut(features, density, params.max_dist);
}

Tensor label_visualization(const SuperpixelSegmentation& seg) {
    Tensor out(seg.height, seg.width, 3);
    auto hue_to_rgb = [](double hue) {
        const double h6 = hue * 6.0;
        const int sector = static_cast<int>(h6) % 6;
        const double f = h6 - std::floor(h6);
        switch (sector) {
            case 0: return std::array<double, 3>{1.0, f, 0.0};
            case 1: return std::array<double, 3>{1.0 - f, 1.0, 0.0};
            case 2: return std::array<double, 3>{0.0, 1.0, f};
            case 3: return std::array<double, 3>{0.0, 1.0 - f, 1.0};
            case 4: return std::array<double, 3>{f, 0.0, 1.0};
            default: return std::array<double, 3>{1.0, 0.0, 1.0 - f};
        }
    };
    constexpr double golden = 0.61803398874989485;
    for (int y = 0; y < seg.height; ++y)
        for (int x = 0; x < seg.width; ++x) {
            const int label = seg.label_at(y, x);
            const double hue = std::fmod(label * golden, 1.0);
            const auto rgb = hue_to_rgb(hue);
            out.at(y, x, 0) = rgb[0];
            out.at(y, x, 1) = rgb[1];
            out.at(y, x, 2) = rgb[2];
        }
    return out;
}

void write_segmentation_json(const std::filesystem::path& path,
                             const SuperpixelSegmentation& seg) {
    nlohmann::json rle = nlohmann::json::array();
    const int n = seg.height * seg.width;
    int run_label = seg.labels.empty() ? 0 : seg.labels[0];
    int run_len = 0;
    for (int p = 0; p < n; ++p) {
        if (seg.labels[p] == run_label) {
            ++run_len;
        } else {
            rle.push_back({run_label, run_len});
            run_label = seg.labels[p];
            run_len = 1;
        }
    }
    if (run_len > 0) rle.push_back({run_label, run_len});

    nlohmann::json doc = {{"height", seg.height},
                          {"width", seg.width},
                          {"n_segments", seg.n_segments},
                          {"rle", std::move(rle)}};
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("cannot open for writing: " + path.string());
    out << doc.dump(2) << '\n';
}

}  // namespace covidscreen
