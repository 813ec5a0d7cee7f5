#include <doctest.h>

#include <array>
#include <cmath>
#include <cstdint>
#include <set>

#include "rach/rng.hpp"

using namespace rach;

namespace {

// Reference generators written out from the published algorithms.
std::uint64_t ref_splitmix(std::uint64_t& x) {
    std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t ref_rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

struct RefXoshiro {
    std::uint64_t s[4];
    explicit RefXoshiro(std::uint64_t seed) {
        for (auto& w : s)
            w = ref_splitmix(seed);
    }
    std::uint64_t next() {
        const std::uint64_t result = ref_rotl(s[1] * 5, 7) * 9;
        const std::uint64_t t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = ref_rotl(s[3], 45);
        return result;
    }
};

}  // namespace

TEST_CASE("splitmix64 known first output from state 0") {
    SplitMix64 sm(0);
    CHECK(sm.next() == 0xE220A8397B1DCDAFULL);
}

TEST_CASE("derive_seed is one splitmix step from master xor index") {
    for (std::uint64_t m : {0ULL, 1ULL, 42ULL, 0xdeadbeefULL}) {
        for (std::uint64_t i : {0ULL, 1ULL, 7ULL}) {
            std::uint64_t x = m ^ i;
            CHECK(derive_seed(m, i) == ref_splitmix(x));
        }
    }
}

TEST_CASE("rng stream replays the reference xoshiro256** sequence") {
    for (std::uint64_t stream : {0ULL, 1ULL, 5ULL}) {
        RngStream rng(123, stream);
        RefXoshiro ref(derive_seed(123, stream));
        for (int k = 0; k < 1000; ++k)
            REQUIRE(rng.next_u64() == ref.next());
    }
}

TEST_CASE("uniform01 uses the top 53 bits") {
    RngStream rng(9, 2);
    RefXoshiro ref(derive_seed(9, 2));
    for (int k = 0; k < 100; ++k) {
        const double u = rng.uniform01();
        CHECK(u == static_cast<double>(ref.next() >> 11) / 9007199254740992.0);
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
    }
}

TEST_CASE("uniform_int stays in range and covers it") {
    RngStream rng(5, 0);
    std::set<std::uint64_t> seen;
    for (int k = 0; k < 2000; ++k) {
        const auto v = rng.uniform_int(7);
        CHECK(v < 7);
        seen.insert(v);
    }
    CHECK(seen.size() == 7);
    CHECK_THROWS(rng.uniform_int(0));
}

TEST_CASE("streams with the same ids repeat, different ids differ") {
    RngStream a(77, 1), b(77, 1), c(77, 2), d(78, 1);
    bool differs_c = false, differs_d = false;
    for (int k = 0; k < 16; ++k) {
        const auto x = a.next_u64();
        CHECK(x == b.next_u64());
        differs_c |= x != c.next_u64();
        differs_d |= x != d.next_u64();
    }
    CHECK(differs_c);
    CHECK(differs_d);
}

TEST_CASE("poisson and normal draws have the right first two moments") {
    RngStream rng(11, 0);
    const int n = 200000;
    double s = 0, ss = 0;
    for (int k = 0; k < n; ++k) {
        const double v = static_cast<double>(rng.poisson(20.0));
        s += v;
        ss += v * v;
    }
    const double m = s / n;
    CHECK(m == doctest::Approx(20.0).epsilon(0.01));
    CHECK(ss / n - m * m == doctest::Approx(20.0).epsilon(0.03));

    s = ss = 0;
    for (int k = 0; k < n; ++k) {
        const double v = rng.normal();
        s += v;
        ss += v * v;
    }
    CHECK(std::abs(s / n) < 0.01);
    CHECK(ss / n == doctest::Approx(1.0).epsilon(0.02));
}
