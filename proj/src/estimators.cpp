#include "rach/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <stdexcept>
#include <string>

namespace rach::estimators {

std::string_view to_string(EstimateSource source) {
    switch (source) {
    case EstimateSource::DA: return "DA";
    case EstimateSource::MoM_full: return "MoM_full";
    case EstimateSource::MoM_idle: return "MoM_idle";
    case EstimateSource::MLE: return "MLE";
    case EstimateSource::LSTM: return "LSTM";
    case EstimateSource::DNN: return "DNN";
    case EstimateSource::genie: return "genie";
    }
    return "unknown";
}

double debar(double transmitters, double acb_factor) {
    return transmitters / std::max(acb_factor, kMinDebarringFactor);
}

DAState da_update(const DAState& state, const Observation& obs) {
    const int r = obs.channels();
    const double transmitters = state.estimate * obs.action.acb_factor;
    const double expected_collisions = expected_moments(transmitters, r).collision;
    DAState next = state;
    next.estimate = std::max(0.0, state.estimate - obs.success) + state.arrival_rate +
                    state.drift_coefficient * (obs.collision - expected_collisions);
    next.estimate = std::max(0.0, next.estimate);
    if (state.track_arrivals)
        next.arrival_rate = 0.9 * state.arrival_rate + 0.1 * obs.success;
    return next;
}

BacklogEstimate mom_closed_form(const Observation& obs) {
    const int r = obs.channels();
    if (r < 2)
        throw std::invalid_argument("mom_closed_form: needs at least two channels");
    BacklogEstimate out{0.0, EstimateSource::MoM_idle, false};
    if (obs.idle >= r)
        return out;
    const double log_q = std::log1p(-1.0 / r);
    double transmitters = 0.0;
    if (obs.idle <= 0) {
        transmitters = std::log(0.5 / r) / log_q;
        out.saturated = true;
    } else {
        transmitters = std::log(static_cast<double>(obs.idle) / r) / log_q;
    }
    out.value = debar(transmitters, obs.action.acb_factor);
    return out;
}

BacklogEstimate mom_full(const Observation& obs, int search_max) {
    if (search_max < 1)
        throw std::invalid_argument("mom_full: search_max must be at least 1");
    if (search_max < obs.success)
        throw std::invalid_argument("mom_full: search_max below observed successes");
    const int r = obs.channels();
    BacklogEstimate out{0.0, EstimateSource::MoM_full, obs.idle == 0};
    double best = std::numeric_limits<double>::infinity();
    int best_m = obs.success;
    for (int m = obs.success; m <= search_max; ++m) {
        const Moments e = expected_moments(m, r);
        const double di = e.idle - obs.idle;
        const double ds = e.success - obs.success;
        const double dc = e.collision - obs.collision;
        const double d = di * di + ds * ds + dc * dc;
        if (d < best) {
            best = d;
            best_m = m;
        }
    }
    out.value = debar(best_m, obs.action.acb_factor);
    return out;
}

namespace {

std::size_t cell(int r, int idle, int success) {
    return static_cast<std::size_t>(idle) * static_cast<std::size_t>(r + 1) + static_cast<std::size_t>(success);
}

// One more device picks a channel: an empty channel becomes a singleton,
// a singleton becomes collided, a collided channel stays collided.
void place_one(int r, const std::vector<double>& from, std::vector<double>& to) {
    std::fill(to.begin(), to.end(), 0.0);
    const double rr = r;
    for (int e = 0; e <= r; ++e) {
        for (int s = 0; e + s <= r; ++s) {
            const double mass = from[cell(r, e, s)];
            if (mass == 0.0)
                continue;
            if (e > 0)
                to[cell(r, e - 1, s + 1)] += mass * (e / rr);
            if (s > 0)
                to[cell(r, e, s - 1)] += mass * (s / rr);
            const int collided = r - e - s;
            if (collided > 0)
                to[cell(r, e, s)] += mass * (collided / rr);
        }
    }
}

}  // namespace

OutcomeDistribution::OutcomeDistribution(int r, std::vector<double> probabilities) : r_(r), p_(std::move(probabilities)) {
    if (p_.size() != static_cast<std::size_t>(r + 1) * static_cast<std::size_t>(r + 1))
        throw std::invalid_argument("OutcomeDistribution: size mismatch");
}

double OutcomeDistribution::at(int idle, int success) const {
    if (idle < 0 || success < 0 || idle + success > r_)
        return 0.0;
    return p_[cell(r_, idle, success)];
}

double OutcomeDistribution::total() const {
    double sum = 0.0;
    for (double v : p_)
        sum += v;
    return sum;
}

OutcomeDistribution mle_outcome_distribution(int m, int r) {
    if (r < 1)
        throw std::invalid_argument("mle_outcome_distribution: r must be at least 1");
    if (r > kDefaultMleMaxChannels)
        throw std::invalid_argument("mle_outcome_distribution: r exceeds " + std::to_string(kDefaultMleMaxChannels));
    if (m < 0 || m > kDefaultMleMaxDevices)
        throw std::invalid_argument("mle_outcome_distribution: m outside [0, " +
                                    std::to_string(kDefaultMleMaxDevices) + "]");
    const std::size_t n = static_cast<std::size_t>(r + 1) * static_cast<std::size_t>(r + 1);
    std::vector<double> cur(n, 0.0), next(n, 0.0);
    cur[cell(r, r, 0)] = 1.0;
    for (int k = 0; k < m; ++k) {
        place_one(r, cur, next);
        cur.swap(next);
    }
    return OutcomeDistribution(r, std::move(cur));
}

OccupancyTable::OccupancyTable(int r, int max_devices) : r_(r), max_m_(max_devices) {
    if (r < 1)
        throw std::invalid_argument("OccupancyTable: r must be at least 1");
    if (max_devices < 0)
        throw std::invalid_argument("OccupancyTable: negative max_devices");
    const std::size_t n = static_cast<std::size_t>(r + 1) * static_cast<std::size_t>(r + 1);
    table_.assign(n * static_cast<std::size_t>(max_devices + 1), 0.0);
    std::vector<double> cur(n, 0.0), next(n, 0.0);
    cur[cell(r, r, 0)] = 1.0;
    for (int m = 0; m <= max_devices; ++m) {
        std::copy(cur.begin(), cur.end(), table_.begin() + static_cast<std::ptrdiff_t>(n * static_cast<std::size_t>(m)));
        place_one(r, cur, next);
        cur.swap(next);
    }
}

double OccupancyTable::likelihood(int m, int idle, int success) const {
    if (m < 0 || m > max_m_ || idle < 0 || success < 0 || idle + success > r_)
        return 0.0;
    const std::size_t n = static_cast<std::size_t>(r_ + 1) * static_cast<std::size_t>(r_ + 1);
    return table_[n * static_cast<std::size_t>(m) + cell(r_, idle, success)];
}

std::shared_ptr<const OccupancyTable> occupancy_table(int r, int max_devices) {
    static std::mutex mutex;
    static std::map<std::pair<int, int>, std::shared_ptr<const OccupancyTable>> cache;
    std::lock_guard lock(mutex);
    auto& slot = cache[{r, max_devices}];
    if (!slot)
        slot = std::make_shared<const OccupancyTable>(r, max_devices);
    return slot;
}

BacklogEstimate mle_estimate(const Observation& obs, int search_max, int max_devices) {
    const int r = obs.channels();
    if (r < 1)
        throw std::invalid_argument("mle_estimate: no channels");
    BacklogEstimate out{0.0, EstimateSource::MLE, obs.idle == 0};
    if (obs.idle >= r)
        return out;
    const int lo = obs.success + 2 * obs.collision;
    const int hi = std::min(search_max, max_devices);
    if (lo > hi)
        throw std::invalid_argument("mle_estimate: observation needs at least " + std::to_string(lo) +
                                    " transmitters, search range ends at " + std::to_string(hi));
    const auto table = occupancy_table(r, max_devices);
    double best = 0.0;
    int best_m = -1;
    for (int m = lo; m <= hi; ++m) {
        const double l = table->likelihood(m, obs.idle, obs.success);
        if (l > best) {
            best = l;
            best_m = m;
        }
    }
    if (best_m < 0)
        throw std::invalid_argument("mle_estimate: observation inconsistent with every transmitter count in range");
    out.value = debar(best_m, obs.action.acb_factor);
    return out;
}

}  // namespace rach::estimators
