#pragma once

#include <cstdint>
#include <vector>

#include "rach/rng.hpp"
#include "rach/sim.hpp"

namespace rach {

enum class TrafficKind { beta_periodic, constant, poisson };

struct TrafficProfile {
    TrafficKind kind = TrafficKind::beta_periodic;
    std::uint64_t total_per_period = 200; // A
    int period = 10;                      // P, frames
    double alpha = 3.0;
    double beta = 4.0;
    // beta_periodic only: largest-remainder rounding (true) or a multinomial
    // split of A per period (false).
    bool deterministic = false;

    bool operator==(const TrafficProfile&) const = default;
};

void validate(const TrafficProfile& profile);

// Beta(alpha, beta) density at the P frame midpoints, normalized to sum 1.
std::vector<double> beta_weights(const TrafficProfile& profile);

// Largest-remainder rounding of total * weights; ties go to the lower index.
std::vector<std::uint64_t> largest_remainder(std::uint64_t total, const std::vector<double>& weights);

double mean_arrivals_per_frame(const TrafficProfile& profile);

// Per-frame arrival counts. Stochastic modes draw from the rng passed in and
// cache the current period's split, so frames must be queried in
// nondecreasing order within a period.
class TrafficGenerator {
public:
    explicit TrafficGenerator(TrafficProfile profile);

    std::uint64_t arrivals_at(FrameIndex frame, RngStream& rng);
    const TrafficProfile& profile() const { return profile_; }

private:
    TrafficProfile profile_;
    std::vector<double> weights_;
    std::vector<double> cumulative_;
    std::vector<std::uint64_t> fixed_counts_;
    FrameIndex cached_period_ = -1;
    std::vector<std::uint64_t> period_counts_;
};

}  // namespace rach
