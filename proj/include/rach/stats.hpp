#pragma once

#include <cstddef>
#include <span>
#include <string>

namespace rach::stats {

double mean(std::span<const double> x);
// Sample standard deviation (n - 1 denominator); 0 for fewer than two values.
double stddev(std::span<const double> x);
// Student t quantile with `dof` degrees of freedom.
double t_quantile(double probability, double dof);

struct PairedSummary {
    std::size_t n = 0;
    double mean_a = 0.0;
    double mean_b = 0.0;
    double mean_diff = 0.0; // a - b
    double sd_diff = 0.0;
    double ci_low = 0.0;    // two-sided 95% interval on the mean difference
    double ci_high = 0.0;
    double lower_bound = 0.0; // one-sided 95% lower confidence bound
};

// Paired comparison of equally long samples; throws on a length mismatch or
// fewer than two pairs.
PairedSummary paired(std::span<const double> a, std::span<const double> b);

struct ConvergenceReport {
    bool converged = false;
    int episode = 0; // 1-based first converged episode
    int window = 0;
    double tolerance = 0.0;
    double final_mean = 0.0;
    std::string reason; // set when not converged
};

// First episode e whose window [e, e + window - 1] and every later full
// window have means within `tolerance` (relative) of the final window's
// mean. Curves that only settle in the final window, or whose final mean is
// not positive, are reported as not converged. Throws for fewer than 10
// points or a window longer than the curve.
ConvergenceReport convergence_report(std::span<const double> curve, double tolerance = 0.05, int window = 10);

}  // namespace rach::stats
