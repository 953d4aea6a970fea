#include "covidscreen/confidence.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <stdexcept>

namespace covidscreen {

namespace {

// Peter Acklam's rational approximation of the probit function
// (relative error ~1.15e-9), used as the seed for a Halley refinement.
double probit_seed(double p) {
    static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                   -2.759285104469687e+02, 1.383577518672690e+02,
                                   -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                   -1.556989798598866e+02, 6.680131188771972e+01,
                                   -1.328068155288572e+01};
    static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                   -2.400758277161838e+00, -2.549732539343734e+00,
                                   4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                   2.445134137142996e+00, 3.754408661907416e+00};
    constexpr double p_low = 0.02425;

    if (p < p_low) {
        const double q = std::sqrt(-2.0 * std::log(p));
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    if (p <= 1.0 - p_low) {
        const double q = p - 0.5;
        const double r = q * q;
        return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
               (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    }
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
}

// Continued fraction for the incomplete beta function (modified Lentz).
double beta_continued_fraction(double a, double b, double x) {
    constexpr int max_iter = 300;
    constexpr double eps = std::numeric_limits<double>::epsilon();
    constexpr double fp_min = std::numeric_limits<double>::min() / eps;

    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < fp_min) d = fp_min;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= max_iter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < fp_min) d = fp_min;
        c = 1.0 + aa / c;
        if (std::fabs(c) < fp_min) c = fp_min;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < fp_min) d = fp_min;
        c = 1.0 + aa / c;
        if (std::fabs(c) < fp_min) c = fp_min;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) <= eps) break;
    }
    return h;
}

void check_counts(int successes, int n, double alpha) {
    if (n < 1)
        throw std::invalid_argument("interval: n must be >= 1");
    if (successes < 0 || successes > n)
        throw std::invalid_argument("interval: successes must lie in [0, n]");
    if (!(alpha > 0.0 && alpha < 1.0))
        throw std::invalid_argument("interval: alpha must lie in (0, 1)");
}

}  // namespace

double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0))
        throw std::invalid_argument("normal_quantile: p must lie in (0, 1)");
    double x = probit_seed(p);
    // Halley refinement against the exact CDF.
    static const double sqrt2 = std::sqrt(2.0);
    static const double sqrt_2pi = std::sqrt(2.0 * std::acos(-1.0));
    const double err = 0.5 * std::erfc(-x / sqrt2) - p;
    const double u = err * sqrt_2pi * std::exp(0.5 * x * x);
    x -= u / (1.0 + 0.5 * x * u);
    return x;
}

double regularized_incomplete_beta(double a, double b, double x) {
    if (a <= 0.0 || b <= 0.0)
        throw std::invalid_argument("regularized_incomplete_beta: a, b must be positive");
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                            a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(ln_front);
    // Use the symmetry I_x(a,b) = 1 - I_{1-x}(b,a) on the slow branch.
    if (x < (a + 1.0) / (a + b + 2.0))
        return front * beta_continued_fraction(a, b, x) / a;
    return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double beta_quantile(double p, double a, double b) {
    if (!(p >= 0.0 && p <= 1.0))
        throw std::invalid_argument("beta_quantile: p must lie in [0, 1]");
    if (p == 0.0) return 0.0;
    if (p == 1.0) return 1.0;
    double lo = 0.0, hi = 1.0;
    constexpr int max_steps = 200;
    constexpr double tol = 1e-13;
    for (int i = 0; i < max_steps && hi - lo > tol; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (regularized_incomplete_beta(a, b, mid) < p)
            lo = mid;
        else
            hi = mid;
    }
    if (hi - lo > 1e-9)
        throw std::runtime_error("beta_quantile: bisection did not converge in 200 steps");
    return 0.5 * (lo + hi);
}

ConfidenceInterval wilson_interval(int successes, int n, double alpha) {
    check_counts(successes, n, alpha);
    const double z = normal_quantile(1.0 - alpha / 2.0);
    const double z2 = z * z;
    const double nn = static_cast<double>(n);
    const double p_hat = successes / nn;
    const double denom = 1.0 + z2 / nn;
    const double center = (p_hat + z2 / (2.0 * nn)) / denom;
    const double half_width =
        z * std::sqrt(p_hat * (1.0 - p_hat) / nn + z2 / (4.0 * nn * nn)) / denom;

    ConfidenceInterval ci;
    ci.method = IntervalMethod::wilson;
    ci.alpha = alpha;
    ci.n = n;
    ci.successes = successes;
    ci.lower = std::max(0.0, center - half_width);
    ci.upper = std::min(1.0, center + half_width);
    // The degenerate bounds are exact; avoid residual rounding.
    if (successes == 0) ci.lower = 0.0;
    if (successes == n) ci.upper = 1.0;
    return ci;
}

ConfidenceInterval bayesian_interval(int successes, int n, double alpha) {
    check_counts(successes, n, alpha);
    const double a = successes + 0.5;
    const double b = (n - successes) + 0.5;

    ConfidenceInterval ci;
    ci.method = IntervalMethod::bayesian;
    ci.alpha = alpha;
    ci.n = n;
    ci.successes = successes;
    ci.lower = successes == 0 ? 0.0 : beta_quantile(alpha / 2.0, a, b);
    ci.upper = successes == n ? 1.0 : beta_quantile(1.0 - alpha / 2.0, a, b);
    ci.lower = std::max(0.0, std::min(ci.lower, static_cast<double>(successes) / n));
    ci.upper = std::min(1.0, std::max(ci.upper, static_cast<double>(successes) / n));
    return ci;
}

std::vector<IntervalRow> interval_table(const std::vector<IntervalRecord>& records,
                                        double alpha) {
    std::vector<IntervalRow> rows;
    rows.reserve(records.size());
    for (const auto& rec : records) {
        IntervalRow row;
        row.label = rec.label;
        row.accuracy = static_cast<double>(rec.successes) / rec.n;
        row.wilson = wilson_interval(rec.successes, rec.n, alpha);
        row.bayesian = bayesian_interval(rec.successes, rec.n, alpha);
        rows.push_back(std::move(row));
    }
    return rows;
}

void write_interval_csv(const std::filesystem::path& path,
                        const std::vector<IntervalRow>& rows) {
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("cannot open for writing: " + path.string());
    out << "Model,Test accuracy,Wilson Score Lower,Wilson Score Upper,"
           "Bayesian Interval Lower,Bayesian Interval Upper\n";
    out << std::fixed << std::setprecision(3);
    for (const auto& row : rows)
        out << row.label << ',' << row.accuracy << ',' << row.wilson.lower << ','
            << row.wilson.upper << ',' << row.bayesian.lower << ',' << row.bayesian.upper
            << '\n';
}

}  // namespace covidscreen
