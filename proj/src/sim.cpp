#include "rach/sim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <unordered_set>

namespace rach {

void validate(const ControlAction& action, int max_channels) {
    if (!(action.acb_factor >= 0.0 && action.acb_factor <= 1.0))
        throw std::invalid_argument("acb_factor must lie in [0, 1], got " + std::to_string(action.acb_factor));
    if (action.backoff_window < 0)
        throw std::invalid_argument("backoff_window must be nonnegative");
    if (action.num_channels < 1)
        throw std::invalid_argument("num_channels must be at least 1");
    if (action.num_channels > max_channels)
        throw std::invalid_argument("num_channels " + std::to_string(action.num_channels) + " exceeds maximum " +
                                    std::to_string(max_channels));
}

FrameResult run_frame(const std::vector<Device>& backlog, const ControlAction& action, int retransmission_limit,
                      FrameIndex frame, RngStream& rng) {
    if (action.num_channels < 1)
        throw std::invalid_argument("run_frame: action must offer at least one channel");
    validate(action, action.num_channels);
    {
        std::unordered_set<std::uint64_t> ids;
        ids.reserve(backlog.size());
        for (const auto& d : backlog)
            if (!ids.insert(d.id).second)
                throw std::invalid_argument("run_frame: duplicate device id " + std::to_string(d.id));
    }

    const auto r = static_cast<std::size_t>(action.num_channels);
    constexpr std::size_t kNoChannel = static_cast<std::size_t>(-1);

    std::vector<std::size_t> chosen(backlog.size(), kNoChannel);
    std::vector<int> occupancy(r, 0);
    std::size_t transmissions = 0;
    for (std::size_t i = 0; i < backlog.size(); ++i) {
        if (backlog[i].backoff_until > frame)
            continue;
        if (!rng.bernoulli(action.acb_factor))
            continue;
        chosen[i] = rng.uniform_int(r);
        ++occupancy[chosen[i]];
        ++transmissions;
    }

    FrameResult out;
    FrameReport& rep = out.report;
    rep.true_backlog = backlog.size();
    rep.transmissions = transmissions;
    rep.observation.frame = frame;
    rep.observation.action = action;
    for (int count : occupancy) {
        if (count == 0)
            ++rep.observation.idle;
        else if (count == 1)
            ++rep.observation.success;
        else
            ++rep.observation.collision;
    }

    out.backlog.reserve(backlog.size());
    for (std::size_t i = 0; i < backlog.size(); ++i) {
        Device d = backlog[i];
        if (chosen[i] == kNoChannel) {
            out.backlog.push_back(d);
            continue;
        }
        if (occupancy[chosen[i]] == 1) {
            rep.successes.push_back({d.id, frame - d.arrival_frame + 1, d.attempts + 1});
            continue;
        }
        ++d.attempts;
        if (d.attempts > retransmission_limit) {
            ++rep.drops;
            continue;
        }
        d.backoff_until = frame + 1;
        if (action.backoff_window > 0)
            d.backoff_until += static_cast<FrameIndex>(rng.uniform_int(static_cast<std::uint64_t>(action.backoff_window) + 1));
        out.backlog.push_back(d);
    }
    return out;
}

Moments expected_moments(double n, int r) {
    if (r < 1)
        throw std::invalid_argument("expected_moments: r must be at least 1");
    if (!(n >= 0.0))
        throw std::invalid_argument("expected_moments: n must be nonnegative");
    Moments m;
    const double rr = r;
    if (n < 1.0) {
        // below one device the closed form overcounts; interpolate n = 0 and n = 1
        m.idle = rr - n;
        m.success = n;
        return m;
    }
    if (r == 1) {
        m.success = n == 1.0 ? 1.0 : 0.0;
        m.collision = 1.0 - m.success;
        return m;
    }
    const double q = 1.0 - 1.0 / rr;
    m.idle = rr * std::pow(q, n);
    m.success = n == 0.0 ? 0.0 : n * std::pow(q, n - 1.0);
    m.collision = std::clamp(rr - m.idle - m.success, 0.0, rr);
    return m;
}

void advance_backlog(Backlog& backlog, std::size_t arrivals, FrameIndex frame) {
    backlog.devices.reserve(backlog.devices.size() + arrivals);
    for (std::size_t k = 0; k < arrivals; ++k)
        backlog.devices.push_back(Device{backlog.next_id++, frame, 0, frame});
}

Simulator::Simulator(int retransmission_limit, int max_channels, std::uint64_t master_seed)
    : limit_(retransmission_limit), max_channels_(max_channels), rng_(master_seed, streams::channel) {
    if (retransmission_limit < 1)
        throw std::invalid_argument("retransmission limit must be at least 1");
    if (max_channels < 1)
        throw std::invalid_argument("max_channels must be at least 1");
}

FrameReport Simulator::step(const ControlAction& action, std::size_t arrivals) {
    validate(action, max_channels_);
    advance_backlog(backlog_, arrivals, frame_);
    FrameResult result = run_frame(backlog_.devices, action, limit_, frame_, rng_);
    result.report.new_arrivals = arrivals;
    backlog_.devices = std::move(result.backlog);
    ++frame_;
    return std::move(result.report);
}

}  // namespace rach
