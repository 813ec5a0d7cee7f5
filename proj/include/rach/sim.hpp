#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "rach/rng.hpp"

namespace rach {

using FrameIndex = std::int64_t;

// A backlogged access attempt.
struct Device {
    std::uint64_t id = 0;
    FrameIndex arrival_frame = 0;
    int attempts = 0;             // collided transmissions so far
    FrameIndex backoff_until = 0; // ineligible while frame < backoff_until
};

// Control tuple broadcast by the base station for one frame.
struct ControlAction {
    double acb_factor = 1.0;
    int backoff_window = 0;
    int num_channels = 54;

    bool operator==(const ControlAction&) const = default;
};

// Throws std::invalid_argument naming the violated bound.
void validate(const ControlAction& action, int max_channels);

// The only information a controller sees about frame t.
struct Observation {
    FrameIndex frame = 0;
    int idle = 0;
    int success = 0;
    int collision = 0;
    ControlAction action;

    int channels() const { return action.num_channels; }
};

struct SuccessRecord {
    std::uint64_t device_id = 0;
    FrameIndex delay = 0; // frames from arrival to the successful frame, inclusive
    int attempts = 0;     // transmissions including the successful one
};

struct FrameReport {
    Observation observation;
    std::size_t true_backlog = 0; // devices in the backlog at frame start
    std::size_t new_arrivals = 0;
    std::vector<SuccessRecord> successes;
    std::size_t drops = 0;
    std::size_t transmissions = 0;
};

struct FrameResult {
    FrameReport report;
    std::vector<Device> backlog;
};

// One f-ALOHA frame. Draw order, per device in backlog order: devices with
// backoff_until <= frame draw uniform01() for the ACB gate and, if passed,
// uniform_int(R) for the channel. After channel resolution each collided
// device (in backlog order) that is not dropped draws uniform_int(W + 1)
// when W > 0.
FrameResult run_frame(const std::vector<Device>& backlog, const ControlAction& action, int retransmission_limit,
                      FrameIndex frame, RngStream& rng);

struct Moments {
    double idle = 0;
    double success = 0;
    double collision = 0;
};

// Expected idle/success/collision channel counts with n transmitters on r
// channels. n may be fractional.
Moments expected_moments(double n, int r);

struct Backlog {
    std::vector<Device> devices;
    std::uint64_t next_id = 0;
};

// Appends `arrivals` fresh devices (eligible immediately) with consecutive ids.
void advance_backlog(Backlog& backlog, std::size_t arrivals, FrameIndex frame);

// Backlog plus channel RNG plus frame clock. Arrivals are supplied per frame
// by the caller so traffic stays on its own stream.
class Simulator {
public:
    Simulator(int retransmission_limit, int max_channels, std::uint64_t master_seed);

    FrameReport step(const ControlAction& action, std::size_t arrivals);
    // Clears the backlog; the frame clock keeps running.
    void reset_backlog() { backlog_.devices.clear(); }

    FrameIndex frame() const { return frame_; }
    std::size_t backlog_size() const { return backlog_.devices.size(); }
    const std::vector<Device>& devices() const { return backlog_.devices; }
    int max_channels() const { return max_channels_; }

private:
    int limit_;
    int max_channels_;
    FrameIndex frame_ = 0;
    Backlog backlog_;
    RngStream rng_;
};

}  // namespace rach
