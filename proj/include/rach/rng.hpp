#pragma once

#include <array>
#include <cstdint>

namespace rach {

// SplitMix64 (Steele, Lea, Flood). Used only to expand seeds.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t state) : state_(state) {}

    std::uint64_t next();

private:
    std::uint64_t state_;
};

// Seed for trial/stream `index` under `master`: first SplitMix64 output
// from state (master XOR index).
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

// xoshiro256** 1.0 (Blackman, Vigna).
class Xoshiro256ss {
public:
    explicit Xoshiro256ss(const std::array<std::uint64_t, 4>& state) : s_(state) {}

    std::uint64_t next();
    const std::array<std::uint64_t, 4>& state() const { return s_; }

private:
    std::array<std::uint64_t, 4> s_;
};

// Reproducible random stream. The generator state is the first four outputs
// of SplitMix64 seeded with derive_seed(master_seed, stream_id).
//
// Draw conventions (part of the bit-exact contract):
//   uniform01()      -> (next() >> 11) * 2^-53, in [0, 1)
//   uniform_int(n)   -> Lemire multiply-shift with rejection, in [0, n)
//   bernoulli(p)     -> uniform01() < p
class RngStream {
public:
    RngStream(std::uint64_t master_seed, std::uint64_t stream_id);

    std::uint64_t next_u64() { return gen_.next(); }
    double uniform01();
    std::uint64_t uniform_int(std::uint64_t n);
    bool bernoulli(double p) { return uniform01() < p; }
    // Knuth multiplication for small means; larger means are split into
    // independent chunks of at most 30.
    std::uint64_t poisson(double mean);
    double normal();

    std::uint64_t master_seed() const { return master_; }
    std::uint64_t stream_id() const { return stream_id_; }

private:
    std::uint64_t master_;
    std::uint64_t stream_id_;
    Xoshiro256ss gen_;
};

// Stream ids used by one simulation instance.
namespace streams {
inline constexpr std::uint64_t traffic = 0;
inline constexpr std::uint64_t channel = 1;
inline constexpr std::uint64_t exploration = 2;
inline constexpr std::uint64_t init = 3;
inline constexpr std::uint64_t replay = 4;
inline constexpr std::uint64_t dataset = 5;
inline constexpr std::uint64_t predictor_replay = 6;
}  // namespace streams

}  // namespace rach
