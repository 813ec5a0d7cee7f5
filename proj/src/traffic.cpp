#include "rach/traffic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace rach {

void validate(const TrafficProfile& profile) {
    if (profile.period < 1)
        throw std::invalid_argument("traffic.period must be at least 1");
    if (!(profile.alpha > 0.0) || !std::isfinite(profile.alpha))
        throw std::invalid_argument("traffic.alpha must be positive");
    if (!(profile.beta > 0.0) || !std::isfinite(profile.beta))
        throw std::invalid_argument("traffic.beta must be positive");
}

std::vector<double> beta_weights(const TrafficProfile& profile) {
    validate(profile);
    const int p = profile.period;
    std::vector<double> w(static_cast<std::size_t>(p));
    // log-density up to the constant log B(alpha, beta), which cancels
    for (int i = 0; i < p; ++i) {
        const double x = (i + 0.5) / p;
        w[static_cast<std::size_t>(i)] =
            std::exp((profile.alpha - 1.0) * std::log(x) + (profile.beta - 1.0) * std::log1p(-x));
    }
    const double total = std::accumulate(w.begin(), w.end(), 0.0);
    for (double& v : w)
        v /= total;
    return w;
}

std::vector<std::uint64_t> largest_remainder(std::uint64_t total, const std::vector<double>& weights) {
    std::vector<std::uint64_t> counts(weights.size(), 0);
    std::vector<double> remainder(weights.size(), 0.0);
    std::uint64_t assigned = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        const double exact = static_cast<double>(total) * weights[i];
        counts[i] = static_cast<std::uint64_t>(std::floor(exact));
        remainder[i] = exact - std::floor(exact);
        assigned += counts[i];
    }
    std::vector<std::size_t> order(weights.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
    for (std::size_t k = 0; assigned < total; k = (k + 1) % order.size()) {
        ++counts[order[k]];
        ++assigned;
    }
    return counts;
}

double mean_arrivals_per_frame(const TrafficProfile& profile) {
    return static_cast<double>(profile.total_per_period) / profile.period;
}

TrafficGenerator::TrafficGenerator(TrafficProfile profile) : profile_(profile) {
    validate(profile_);
    const auto p = static_cast<std::size_t>(profile_.period);
    if (profile_.kind == TrafficKind::beta_periodic)
        weights_ = beta_weights(profile_);
    else
        weights_.assign(p, 1.0 / static_cast<double>(p));
    cumulative_.resize(p);
    std::partial_sum(weights_.begin(), weights_.end(), cumulative_.begin());
    cumulative_.back() = 1.0;
    fixed_counts_ = largest_remainder(profile_.total_per_period, weights_);
}

std::uint64_t TrafficGenerator::arrivals_at(FrameIndex frame, RngStream& rng) {
    if (frame < 0)
        throw std::invalid_argument("arrivals_at: negative frame");
    const FrameIndex period = frame / profile_.period;
    const auto slot = static_cast<std::size_t>(frame % profile_.period);

    switch (profile_.kind) {
    case TrafficKind::constant:
        return fixed_counts_[slot];
    case TrafficKind::poisson:
        return rng.poisson(mean_arrivals_per_frame(profile_));
    case TrafficKind::beta_periodic:
        break;
    }
    if (profile_.deterministic)
        return fixed_counts_[slot];

    if (period != cached_period_) {
        // each of the A devices independently picks its frame within the period
        period_counts_.assign(weights_.size(), 0);
        for (std::uint64_t k = 0; k < profile_.total_per_period; ++k) {
            const double u = rng.uniform01();
            const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
            const auto idx = std::min<std::size_t>(static_cast<std::size_t>(it - cumulative_.begin()), weights_.size() - 1);
            ++period_counts_[idx];
        }
        cached_period_ = period;
    }
    return period_counts_[slot];
}

}  // namespace rach
