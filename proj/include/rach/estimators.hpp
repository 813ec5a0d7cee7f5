#pragma once

#include <memory>
#include <string_view>
#include <vector>

#include "rach/sim.hpp"

namespace rach::estimators {

enum class EstimateSource { DA, MoM_full, MoM_idle, MLE, LSTM, DNN, genie };

std::string_view to_string(EstimateSource source);

struct BacklogEstimate {
    double value = 0.0;
    EstimateSource source = EstimateSource::genie;
    bool saturated = false; // no idle channel was observed
};

// Observations count transmitters; dividing by the applied ACB factor turns
// a transmitter estimate into a backlog estimate. The factor is clamped
// below so a near-zero p cannot blow the estimate up.
inline constexpr double kMinDebarringFactor = 1.0 / 64.0;

double debar(double transmitters, double acb_factor);

// Drift-analysis recursion state.
struct DAState {
    double estimate = 0.0;
    double drift_coefficient = 2.39; // ~E[k | k >= 2] for Poisson(1) channel load
    double arrival_rate = 0.0;       // lambda-hat, devices per frame
    // When set, arrival_rate tracks an exponential moving average of
    // observed successes instead of staying fixed.
    bool track_arrivals = false;
};

// N' = max(0, N - S) + lambda + beta * (C - E_C(N * p, R)).
DAState da_update(const DAState& state, const Observation& obs);

// Idle first-moment inversion: M = ln(I/R) / ln(1 - 1/R). With no idle
// channel, half an idle channel is assumed and the result is flagged.
BacklogEstimate mom_closed_form(const Observation& obs);

// Integer m in [S, search_max] minimising the squared distance between
// expected and observed (I, S, C); ties go to the smaller m.
BacklogEstimate mom_full(const Observation& obs, int search_max);

// Exact joint law of (idle, success) channel counts when m devices pick one
// of r channels uniformly. at(i, s) is zero outside the support.
class OutcomeDistribution {
public:
    OutcomeDistribution(int r, std::vector<double> probabilities);

    int channels() const { return r_; }
    double at(int idle, int success) const;
    double total() const;

private:
    int r_;
    std::vector<double> p_; // (r + 1) x (r + 1), row = idle
};

OutcomeDistribution mle_outcome_distribution(int m, int r);

// Outcome laws for every m in [0, max_devices] on r channels, built by one
// sequential-placement pass.
class OccupancyTable {
public:
    OccupancyTable(int r, int max_devices);

    int channels() const { return r_; }
    int max_devices() const { return max_m_; }
    double likelihood(int m, int idle, int success) const;

private:
    int r_;
    int max_m_;
    std::vector<double> table_; // (max_m + 1) x (r + 1) x (r + 1)
};

// Shared read-only tables keyed by (r, max_devices).
std::shared_ptr<const OccupancyTable> occupancy_table(int r, int max_devices);

inline constexpr int kDefaultMleMaxDevices = 300;
inline constexpr int kDefaultMleMaxChannels = 64;

// argmax_m P(I, S | m, R) over m in [S + 2C, min(search_max, max_devices)];
// ties go to the smaller m. Throws when no m in range explains the
// observation.
BacklogEstimate mle_estimate(const Observation& obs, int search_max, int max_devices = kDefaultMleMaxDevices);

}  // namespace rach::estimators
