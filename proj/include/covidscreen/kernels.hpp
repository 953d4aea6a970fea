#pragma once

#include <span>
#include <vector>

// Compute kernels behind the library's hot loops. Every kernel exists twice:
// the OpenMP version used in production, and a plain serial version under
// kernels::serial. The two are required to produce bit-identical output
// (each output element is accumulated by a single thread in the same order),
// which the test suite and the benchmark target both rely on. The only
// caveat is quickshift_parents, whose ring pruning needs the coordinate
// embedding documented at its declaration.

namespace covidscreen::kernels {

struct ConvDims {
    int in_h = 0, in_w = 0;
    int k_h = 0, k_w = 0;
    int stride = 1;
    int out_h() const { return (in_h - k_h) / stride + 1; }
    int out_w() const { return (in_w - k_w) / stride + 1; }
};

// Discrete 2-D convolution (flipped kernel) over the valid region:
//   out(i,j) = sum_{m,n} k(m,n) * x(i*stride + k_h-1-m, j*stride + k_w-1-n)
// x is in_h*in_w, k is k_h*k_w, out must hold out_h()*out_w().
void conv2d_valid(std::span<const double> x, std::span<const double> k,
                  const ConvDims& d, std::span<double> out);

// Quick-shift density: per-pixel Gaussian window sum over features.
//   density(p) = sum_{q : |q-p|_inf <= ceil(3*sigma)} exp(-|f(p)-f(q)|^2 / (2 sigma^2))
// feat holds h*w rows of feat_dim doubles.
std::vector<double> quickshift_density(std::span<const double> feat, int h, int w,
                                       int feat_dim, double sigma);

struct ParentLink {
    int parent = -1;       // linear pixel index, -1 when no candidate exists
    double dist = 0.0;     // feature-space distance to the parent
};

// For each pixel, the nearest pixel in feature space whose density is higher
// (density ties resolved by raster precedence: the earlier pixel counts as
// higher). Search is limited to a spatial Chebyshev window of `radius`
// pixels; distance ties are broken toward the smaller linear index.
//
// This variant prunes by expanding spatial rings, which is valid only when
// the feature distance of two pixels is bounded below by their Chebyshev
// offset — guaranteed when two feature components are the raw x and y grid
// coordinates, as pixel_features produces. Features without that embedding
// must use serial::quickshift_parents.
std::vector<ParentLink> quickshift_parents(std::span<const double> feat, int h, int w,
                                           int feat_dim, std::span<const double> density,
                                           int radius);

namespace serial {

void conv2d_valid(std::span<const double> x, std::span<const double> k,
                  const ConvDims& d, std::span<double> out);

std::vector<double> quickshift_density(std::span<const double> feat, int h, int w,
                                       int feat_dim, double sigma);

// Exhaustive window scan, no pruning. Reference for the ring-expanding
// parallel version.
std::vector<ParentLink> quickshift_parents(std::span<const double> feat, int h, int w,
                                           int feat_dim, std::span<const double> density,
                                           int radius);

}  // namespace serial

}  // namespace covidscreen::kernels
