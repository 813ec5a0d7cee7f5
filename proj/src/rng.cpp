#include "rach/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace rach {

namespace {

constexpr std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

std::array<std::uint64_t, 4> expand_seed(std::uint64_t seed) {
    SplitMix64 sm(seed);
    std::array<std::uint64_t, 4> s{};
    for (auto& word : s)
        word = sm.next();
    return s;
}

}  // namespace

std::uint64_t SplitMix64::next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
    return SplitMix64(master ^ index).next();
}

std::uint64_t Xoshiro256ss::next() {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
}

RngStream::RngStream(std::uint64_t master_seed, std::uint64_t stream_id)
    : master_(master_seed), stream_id_(stream_id), gen_(expand_seed(derive_seed(master_seed, stream_id))) {}

double RngStream::uniform01() {
    return static_cast<double>(gen_.next() >> 11) * 0x1.0p-53;
}

std::uint64_t RngStream::uniform_int(std::uint64_t n) {
    if (n == 0)
        throw std::invalid_argument("uniform_int: empty range");
    unsigned __int128 m = static_cast<unsigned __int128>(gen_.next()) * n;
    auto low = static_cast<std::uint64_t>(m);
    if (low < n) {
        const std::uint64_t threshold = (0 - n) % n;
        while (low < threshold) {
            m = static_cast<unsigned __int128>(gen_.next()) * n;
            low = static_cast<std::uint64_t>(m);
        }
    }
    return static_cast<std::uint64_t>(m >> 64);
}

std::uint64_t RngStream::poisson(double mean) {
    if (!(mean >= 0.0) || !std::isfinite(mean))
        throw std::invalid_argument("poisson: mean must be finite and nonnegative");
    std::uint64_t total = 0;
    while (mean > 0.0) {
        const double chunk = mean > 30.0 ? 30.0 : mean;
        mean -= chunk;
        const double limit = std::exp(-chunk);
        double product = uniform01();
        while (product > limit) {
            ++total;
            product *= uniform01();
        }
    }
    return total;
}

double RngStream::normal() {
    // Box-Muller, one output per call.
    double u1 = uniform01();
    while (u1 <= 0.0)
        u1 = uniform01();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

}  // namespace rach
