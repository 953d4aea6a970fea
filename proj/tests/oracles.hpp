#pragma once

// Independent reference implementations the library is checked against.
// Everything here favors the most literal formulation over speed, and shares
// no code with src/: convolution transcribes the textbook sum, the beta
// quantile integrates the density instead of evaluating the continued
// fraction, and the least-squares solve is hand-rolled Gaussian elimination
// rather than Eigen.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "covidscreen/image.hpp"

namespace oracle {

// Quadruple-loop transcription of valid-region flipped-kernel convolution,
//   out(i,j) = sum_{m,n} k(m,n) * x(i*stride + kh-1-m, j*stride + kw-1-n).
// Bit-exact agreement with the library requires the same accumulation order,
// so the sum runs over kernel rows then columns, ascending.
inline covidscreen::Tensor conv2d(const covidscreen::Tensor& x, const covidscreen::Tensor& k,
                                  int stride) {
    const int kh = k.height(), kw = k.width();
    const int out_h = (x.height() - kh) / stride + 1;
    const int out_w = (x.width() - kw) / stride + 1;
    covidscreen::Tensor out(out_h, out_w, 1);
    for (int i = 0; i < out_h; ++i)
        for (int j = 0; j < out_w; ++j) {
            double acc = 0.0;
            for (int m = 0; m < kh; ++m)
                for (int n = 0; n < kw; ++n)
                    acc += k.at(m, n, 0) *
                           x.at(i * stride + kh - 1 - m, j * stride + kw - 1 - n, 0);
            out.at(i, j, 0) = acc;
        }
    return out;
}

// All-pairs Gaussian window density with an explicit Chebyshev test.
inline std::vector<double> density(std::span<const double> feat, int h, int w, int dim,
                                   double sigma) {
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    const int n = h * w;
    std::vector<double> out(n, 0.0);
    for (int p = 0; p < n; ++p) {
        const int py = p / w, px = p % w;
        for (int q = 0; q < n; ++q) {
            const int qy = q / w, qx = q % w;
            if (std::abs(py - qy) > radius || std::abs(px - qx) > radius) continue;
            double d2 = 0.0;
            for (int c = 0; c < dim; ++c) {
                const double diff = feat[static_cast<std::size_t>(p) * dim + c] -
                                    feat[static_cast<std::size_t>(q) * dim + c];
                d2 += diff * diff;
            }
            out[p] += std::exp(-d2 / (2.0 * sigma * sigma));
        }
    }
    return out;
}

// Weighted ridge regression via Gaussian elimination with partial pivoting.
// Rows of Z exclude the intercept column; the returned vector is
// [b0, b1 .. bK] with only b1..bK penalized.
inline std::vector<double> ridge_wls(const std::vector<std::vector<double>>& Z,
                                     const std::vector<double>& y,
                                     const std::vector<double>& w, double lambda) {
    const int n = static_cast<int>(Z.size());
    const int k = static_cast<int>(Z.front().size());
    const int dim = k + 1;

    std::vector<std::vector<double>> A(dim, std::vector<double>(dim, 0.0));
    std::vector<double> rhs(dim, 0.0);
    std::vector<double> row(dim);
    for (int i = 0; i < n; ++i) {
        row[0] = 1.0;
        for (int j = 0; j < k; ++j) row[j + 1] = Z[i][j];
        for (int a = 0; a < dim; ++a) {
            rhs[a] += w[i] * row[a] * y[i];
            for (int b = 0; b < dim; ++b) A[a][b] += w[i] * row[a] * row[b];
        }
    }
    for (int j = 1; j < dim; ++j) A[j][j] += lambda;

    for (int col = 0; col < dim; ++col) {
        int pivot = col;
        for (int r = col + 1; r < dim; ++r)
            if (std::abs(A[r][col]) > std::abs(A[pivot][col])) pivot = r;
        std::swap(A[col], A[pivot]);
        std::swap(rhs[col], rhs[pivot]);
        if (A[col][col] == 0.0) throw std::runtime_error("singular system in oracle solve");
        for (int r = col + 1; r < dim; ++r) {
            const double f = A[r][col] / A[col][col];
            for (int c = col; c < dim; ++c) A[r][c] -= f * A[col][c];
            rhs[r] -= f * rhs[col];
        }
    }
    std::vector<double> beta(dim);
    for (int r = dim - 1; r >= 0; --r) {
        double acc = rhs[r];
        for (int c = r + 1; c < dim; ++c) acc -= A[r][c] * beta[c];
        beta[r] = acc / A[r][r];
    }
    return beta;
}

// Regularized beta CDF by Simpson integration under x = sin^2(t), which
// removes the endpoint singularities for a, b >= 1/2:
//   I_x(a,b) = (2/B(a,b)) * int_0^asin(sqrt(x)) sin^(2a-1) cos^(2b-1) dt.
inline double beta_cdf(double x, double a, double b) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double log_beta = std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
    const double phi = std::asin(std::sqrt(x));
    const auto integrand = [&](double t) {
        const double s = std::sin(t), c = std::cos(t);
        // sin/cos exponents are non-negative for a,b >= 1/2; pow(0,0) = 1.
        return std::pow(s, 2.0 * a - 1.0) * std::pow(c, 2.0 * b - 1.0);
    };
    const int steps = 16384;  // even
    const double hstep = phi / steps;
    double sum = integrand(0.0) + integrand(phi);
    for (int i = 1; i < steps; ++i) sum += (i % 2 == 1 ? 4.0 : 2.0) * integrand(i * hstep);
    const double integral = sum * hstep / 3.0;
    return 2.0 * integral * std::exp(-log_beta);
}

inline double beta_quantile(double p, double a, double b) {
    double lo = 0.0, hi = 1.0;
    for (int i = 0; i < 120; ++i) {
        const double mid = 0.5 * (lo + hi);
        (beta_cdf(mid, a, b) < p ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

// Wilson score interval at alpha = 0.05, direct formula.
inline std::pair<double, double> wilson95(int successes, int n) {
    const double z = 1.959963984540054;
    const double z2 = z * z;
    const double p = static_cast<double>(successes) / n;
    const double denom = 1.0 + z2 / n;
    const double center = (p + z2 / (2.0 * n)) / denom;
    const double half = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
    return {std::max(0.0, center - half), std::min(1.0, center + half)};
}

// LIME kernel weight of a mask against the all-ones instance.
inline double lime_weight(std::uint32_t ones, std::uint32_t K, double kernel_width) {
    const double d = ones == 0 ? 1.0 : 1.0 - std::sqrt(static_cast<double>(ones) / K);
    return std::exp(-d * d / (kernel_width * kernel_width));
}

// Closed-form weighted ridge fit over all 2^K masks of a mask-level black
// box. Returns [b0, b1 .. bK].
template <typename BlackBox>
std::vector<double> exhaustive_lime_fit(int K, double kernel_width, const BlackBox& g) {
    const int total = 1 << K;
    std::vector<std::vector<double>> Z;
    std::vector<double> y, w;
    std::vector<std::uint8_t> mask(K);
    for (int bits = 0; bits < total; ++bits) {
        for (int j = 0; j < K; ++j) mask[j] = (bits >> j) & 1;
        Z.emplace_back(mask.begin(), mask.end());
        y.push_back(g(mask));
        w.push_back(lime_weight(static_cast<std::uint32_t>(std::popcount(
                                    static_cast<std::uint32_t>(bits))),
                                K, kernel_width));
    }
    return ridge_wls(Z, y, w, 1e-6);
}

}  // namespace oracle
