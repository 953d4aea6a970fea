#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace covidscreen {

enum class IntervalMethod { wilson, bayesian };

// A two-sided interval for a binomial proportion successes/n at confidence
// level 1-alpha. Both construction paths guarantee
//   0 <= lower <= successes/n <= upper <= 1.
struct ConfidenceInterval {
    double lower = 0.0;
    double upper = 1.0;
    IntervalMethod method = IntervalMethod::wilson;
    double alpha = 0.05;
    int n = 0;
    int successes = 0;

    double point_estimate() const { return static_cast<double>(successes) / n; }
};

// Standard normal quantile (inverse CDF). Rational approximation refined by
// one Halley step against erfc; absolute error well below 1e-8 across (0,1).
double normal_quantile(double p);

// Regularized incomplete beta function I_x(a,b), continued-fraction
// evaluation. Requires a > 0, b > 0.
double regularized_incomplete_beta(double a, double b, double x);

// Quantile of the Beta(a,b) distribution by bisection on I_x(a,b). Throws if
// the bracket has not converged after 200 bisection steps.
double beta_quantile(double p, double a, double b);

// Wilson score interval. With z the (1-alpha/2) normal quantile and
// p^ = successes/n:
//   center     = (p^ + z^2/2n) / (1 + z^2/n)
//   half-width = z * sqrt(p^(1-p^)/n + z^2/4n^2) / (1 + z^2/n)
// Bounds are clipped to [0,1]; the p^=0 lower and p^=1 upper bounds are
// exactly 0 and 1.
ConfidenceInterval wilson_interval(int successes, int n, double alpha);

// Jeffreys-prior credible interval: the equal-tailed alpha/2 .. 1-alpha/2
// quantile range of Beta(successes + 1/2, n - successes + 1/2), with the
// degenerate endpoints pinned (lower = 0 when successes = 0, upper = 1 when
// successes = n).
ConfidenceInterval bayesian_interval(int successes, int n, double alpha);

struct IntervalRecord {
    std::string label;   // typically "<dataset>/<model>"
    int successes = 0;
    int n = 0;
};

struct IntervalRow {
    std::string label;
    double accuracy = 0.0;
    ConfidenceInterval wilson;
    ConfidenceInterval bayesian;
};

// One row per record, both methods.
std::vector<IntervalRow> interval_table(const std::vector<IntervalRecord>& records,
                                        double alpha);

// CSV with 3-decimal bounds:
//   Model,Test accuracy,Wilson Score Lower,Wilson Score Upper,
//   Bayesian Interval Lower,Bayesian Interval Upper
void write_interval_csv(const std::filesystem::path& path,
                        const std::vector<IntervalRow>& rows);

}  // namespace covidscreen
