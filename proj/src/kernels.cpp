#include "covidscreen/kernels.hpp"

#include <cmath>
#include <stdexcept>

namespace covidscreen::kernels {

namespace {

inline void check_conv_args(std::span<const double> x, std::span<const double> k,
                            const ConvDims& d, std::span<const double> out) {
    if (d.k_h > d.in_h || d.k_w > d.in_w)
        throw std::invalid_argument("conv2d_valid: kernel larger than input");
    if (d.stride < 1)
        throw std::invalid_argument("conv2d_valid: stride must be >= 1");
    if (x.size() != static_cast<std::size_t>(d.in_h) * d.in_w ||
        k.size() != static_cast<std::size_t>(d.k_h) * d.k_w ||
        out.size() != static_cast<std::size_t>(d.out_h()) * d.out_w())
        throw std::invalid_argument("conv2d_valid: buffer size mismatch");
}

// One output element; identical accumulation order in both variants.
inline double conv_cell(std::span<const double> x, std::span<const double> k,
                        const ConvDims& d, int i, int j) {
    double acc = 0.0;
    const int base_y = i * d.stride + d.k_h - 1;
    const int base_x = j * d.stride + d.k_w - 1;
    for (int m = 0; m < d.k_h; ++m)
        for (int n = 0; n < d.k_w; ++n)
            acc += k[static_cast<std::size_t>(m) * d.k_w + n] *
                   x[static_cast<std::size_t>(base_y - m) * d.in_w + (base_x - n)];
    return acc;
}

inline double feature_sqdist(const double* a, const double* b, int dim) {
    double acc = 0.0;
    for (int i = 0; i < dim; ++i) {
        const double diff = a[i] - b[i];
        acc += diff * diff;
    }
    return acc;
}

inline double density_cell(std::span<const double> feat, int h, int w, int feat_dim,
                           double inv_two_sigma_sq, int rad, int p) {
    const int py = p / w;
    const int px = p % w;
    const double* fp = feat.data() + static_cast<std::size_t>(p) * feat_dim;
    double acc = 0.0;
    const int y0 = std::max(0, py - rad), y1 = std::min(h - 1, py + rad);
    const int x0 = std::max(0, px - rad), x1 = std::min(w - 1, px + rad);
    for (int qy = y0; qy <= y1; ++qy)
        for (int qx = x0; qx <= x1; ++qx) {
            const double* fq = feat.data() + (static_cast<std::size_t>(qy) * w + qx) * feat_dim;
            acc += std::exp(-feature_sqdist(fp, fq, feat_dim) * inv_two_sigma_sq);
        }
    return acc;
}

// Density ordering used for parent links: ties fall back to raster precedence
// so density plateaus still form a single tree.
inline bool outranks(std::span<const double> density, int q, int p) {
    return density[q] > density[p] || (density[q] == density[p] && q < p);
}

inline void consider(std::span<const double> feat, int feat_dim, int p, int q,
                     ParentLink& best) {
    const double d2 = feature_sqdist(feat.data() + static_cast<std::size_t>(p) * feat_dim,
                                     feat.data() + static_cast<std::size_t>(q) * feat_dim,
                                     feat_dim);
    const double dist = std::sqrt(d2);
    if (best.parent == -1 || dist < best.dist ||
        (dist == best.dist && q < best.parent)) {
        best.parent = q;
        best.dist = dist;
    }
}

// Full-window raster scan for one pixel.
inline ParentLink parent_scan(std::span<const double> feat, int h, int w, int feat_dim,
                              std::span<const double> density, int radius, int p) {
    const int py = p / w;
    const int px = p % w;
    ParentLink best;
    const int y0 = std::max(0, py - radius), y1 = std::min(h - 1, py + radius);
    const int x0 = std::max(0, px - radius), x1 = std::min(w - 1, px + radius);
    for (int qy = y0; qy <= y1; ++qy)
        for (int qx = x0; qx <= x1; ++qx) {
            const int q = qy * w + qx;
            if (q == p || !outranks(density, q, p)) continue;
            consider(feat, feat_dim, p, q, best);
        }
    return best;
}

// Expanding-ring scan. Feature distance is bounded below by the spatial
// offset, so once the ring radius exceeds the best distance found no farther
// ring can win or tie; results match parent_scan exactly.
inline ParentLink parent_rings(std::span<const double> feat, int h, int w, int feat_dim,
                               std::span<const double> density, int radius, int p) {
    const int py = p / w;
    const int px = p % w;
    ParentLink best;
    for (int r = 1; r <= radius; ++r) {
        if (best.parent != -1 && static_cast<double>(r) > best.dist) break;
        const int y0 = std::max(0, py - r), y1 = std::min(h - 1, py + r);
        for (int qy = y0; qy <= y1; ++qy) {
            const bool edge_row = (qy == py - r || qy == py + r);
            const int x0 = std::max(0, px - r), x1 = std::min(w - 1, px + r);
            if (edge_row) {
                for (int qx = x0; qx <= x1; ++qx) {
                    const int q = qy * w + qx;
                    if (outranks(density, q, p)) consider(feat, feat_dim, p, q, best);
                }
            } else {
                if (px - r >= 0) {
                    const int q = qy * w + (px - r);
                    if (outranks(density, q, p)) consider(feat, feat_dim, p, q, best);
                }
                if (px + r <= w - 1) {
                    const int q = qy * w + (px + r);
                    if (outranks(density, q, p)) consider(feat, feat_dim, p, q, best);
                }
            }
        }
    }
    return best;
}

inline void check_qs_args(std::span<const double> feat, int h, int w, int feat_dim) {
    if (h < 1 || w < 1 || feat_dim < 1)
        throw std::invalid_argument("quickshift kernel: empty grid");
    if (feat.size() != static_cast<std::size_t>(h) * w * feat_dim)
        throw std::invalid_argument("quickshift kernel: feature buffer size mismatch");
}

}  // namespace

void conv2d_valid(std::span<const double> x, std::span<const double> k,
                  const ConvDims& d, std::span<double> out) {
    check_conv_args(x, k, d, out);
    const int oh = d.out_h(), ow = d.out_w();
#pragma omp parallel for schedule(static)
    for (int i = 0; i < oh; ++i)
        for (int j = 0; j < ow; ++j)
            out[static_cast<std::size_t>(i) * ow + j] = conv_cell(x, k, d, i, j);
}

std::vector<double> quickshift_density(std::span<const double> feat, int h, int w,
                                       int feat_dim, double sigma) {
    check_qs_args(feat, h, w, feat_dim);
    if (sigma <= 0.0)
        throw std::invalid_argument("quickshift_density: sigma must be positive");
    const int rad = static_cast<int>(std::ceil(3.0 * sigma));
    const double inv = 1.0 / (2.0 * sigma * sigma);
    const int n = h * w;
    std::vector<double> density(n);
#pragma omp parallel for schedule(static)
    for (int p = 0; p < n; ++p)
        density[p] = density_cell(feat, h, w, feat_dim, inv, rad, p);
    return density;
}

std::vector<ParentLink> quickshift_parents(std::span<const double> feat, int h, int w,
                                           int feat_dim, std::span<const double> density,
                                           int radius) {
    check_qs_args(feat, h, w, feat_dim);
    if (radius < 1)
        throw std::invalid_argument("quickshift_parents: radius must be >= 1");
    const int n = h * w;
    std::vector<ParentLink> links(n);
#pragma omp parallel for schedule(dynamic, 64)
    for (int p = 0; p < n; ++p)
        links[p] = parent_rings(feat, h, w, feat_dim, density, radius, p);
    return links;
}

namespace serial {

void conv2d_valid(std::span<const double> x, std::span<const double> k,
                  const ConvDims& d, std::span<double> out) {
    check_conv_args(x, k, d, out);
    const int oh = d.out_h(), ow = d.out_w();
    for (int i = 0; i < oh; ++i)
        for (int j = 0; j < ow; ++j)
            out[static_cast<std::size_t>(i) * ow + j] = conv_cell(x, k, d, i, j);
}

std::vector<double> quickshift_density(std::span<const double> feat, int h, int w,
                                       int feat_dim, double sigma) {
    check_qs_args(feat, h, w, feat_dim);
    if (sigma <= 0.0)
        throw std::invalid_argument("quickshift_density: sigma must be positive");
    const int rad = static_cast<int>(std::ceil(3.0 * sigma));
    const double inv = 1.0 / (2.0 * sigma * sigma);
    const int n = h * w;
    std::vector<double> density(n);
    for (int p = 0; p < n; ++p)
        density[p] = density_cell(feat, h, w, feat_dim, inv, rad, p);
    return density;
}

std::vector<ParentLink> quickshift_parents(std::span<const double> feat, int h, int w,
                                           int feat_dim, std::span<const double> density,
                                           int radius) {
    check_qs_args(feat, h, w, feat_dim);
    if (radius < 1)
        throw std::invalid_argument("quickshift_parents: radius must be >= 1");
    const int n = h * w;
    std::vector<ParentLink> links(n);
    for (int p = 0; p < n; ++p)
        links[p] = parent_scan(feat, h, w, feat_dim, density, radius, p);
    return links;
}

}  // namespace serial

}  // namespace covidscreen::kernels
