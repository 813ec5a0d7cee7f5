#include "rach/stats.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

namespace rach::stats {

double mean(std::span<const double> x) {
    if (x.empty())
        return 0.0;
    return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double stddev(std::span<const double> x) {
    if (x.size() < 2)
        return 0.0;
    const double m = mean(x);
    double ss = 0.0;
    for (double v : x)
        ss += (v - m) * (v - m);
    return std::sqrt(ss / static_cast<double>(x.size() - 1));
}

double t_quantile(double probability, double dof) {
    return boost::math::quantile(boost::math::students_t(dof), probability);
}

PairedSummary paired(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size())
        throw std::invalid_argument("paired: samples differ in length");
    if (a.size() < 2)
        throw std::invalid_argument("paired: need at least two pairs");
    std::vector<double> d(a.size());
    for (std::size_t i = 0; i < a.size(); ++i)
        d[i] = a[i] - b[i];
    PairedSummary s;
    s.n = a.size();
    s.mean_a = mean(a);
    s.mean_b = mean(b);
    s.mean_diff = mean(d);
    s.sd_diff = stddev(d);
    const double se = s.sd_diff / std::sqrt(static_cast<double>(s.n));
    const double dof = static_cast<double>(s.n - 1);
    const double two = t_quantile(0.975, dof) * se;
    s.ci_low = s.mean_diff - two;
    s.ci_high = s.mean_diff + two;
    s.lower_bound = s.mean_diff - t_quantile(0.95, dof) * se;
    return s;
}

ConvergenceReport convergence_report(std::span<const double> curve, double tolerance, int window) {
    if (curve.size() < 10)
        throw std::invalid_argument("convergence_report: need at least 10 episodes");
    if (window < 1 || static_cast<std::size_t>(window) > curve.size())
        throw std::invalid_argument("convergence_report: window must lie in [1, curve length]");
    if (!(tolerance > 0.0))
        throw std::invalid_argument("convergence_report: tolerance must be positive");

    ConvergenceReport r;
    r.window = window;
    r.tolerance = tolerance;
    const std::size_t w = static_cast<std::size_t>(window);
    const std::size_t starts = curve.size() - w + 1;
    std::vector<double> means(starts);
    for (std::size_t e = 0; e < starts; ++e)
        means[e] = mean(curve.subspan(e, w));
    r.final_mean = means.back();
    if (!std::isfinite(r.final_mean) || r.final_mean <= 0.0) {
        r.reason = "final window mean is not positive";
        return r;
    }
    // Scan backwards for the longest suffix of windows inside the band.
    std::size_t first = starts;
    for (std::size_t e = starts; e-- > 0;) {
        if (!(std::abs(means[e] - r.final_mean) <= tolerance * r.final_mean))
            break;
        first = e;
    }
    if (first == starts - 1 && starts > 1) {
        r.reason = "curve only settles in the final window";
        return r;
    }
    r.converged = true;
    r.episode = static_cast<int>(first) + 1;
    return r;
}

}  // namespace rach::stats
