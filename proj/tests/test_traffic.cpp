#include <doctest.h>

#include <algorithm>
#include <numeric>

#include <boost/math/distributions/beta.hpp>

#include "rach/traffic.hpp"

using namespace rach;

namespace {

TrafficProfile beta_profile(std::uint64_t a, bool deterministic) {
    TrafficProfile p;
    p.total_per_period = a;
    p.deterministic = deterministic;
    return p;
}

}  // namespace

TEST_CASE("beta weights match the normalized Beta(3,4) density at midpoints") {
    const auto w = beta_weights(beta_profile(200, true));
    REQUIRE(w.size() == 10);
    // oracle: an independent Beta pdf evaluated at (i + 0.5) / 10
    boost::math::beta_distribution<double> dist(3.0, 4.0);
    std::vector<double> ref(10);
    for (int i = 0; i < 10; ++i)
        ref[static_cast<std::size_t>(i)] = boost::math::pdf(dist, (i + 0.5) / 10.0);
    const double total = std::accumulate(ref.begin(), ref.end(), 0.0);
    for (std::size_t i = 0; i < 10; ++i)
        CHECK(w[i] == doctest::Approx(ref[i] / total).epsilon(1e-12));
    CHECK(std::accumulate(w.begin(), w.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-14));
    const auto peak = std::max_element(w.begin(), w.end()) - w.begin();
    CHECK((peak == 3 || peak == 4));
}

TEST_CASE("beta weight edge cases") {
    TrafficProfile p;
    p.period = 1;
    CHECK(beta_weights(p) == std::vector<double>{1.0});
    p.period = 7;
    p.alpha = p.beta = 1.0;
    for (double v : beta_weights(p))
        CHECK(v == doctest::Approx(1.0 / 7));
    p.alpha = 0.0;
    CHECK_THROWS(beta_weights(p));
}

TEST_CASE("largest remainder keeps the total and ties go low") {
    const auto c = largest_remainder(10, {1.0 / 3, 1.0 / 3, 1.0 / 3});
    CHECK(c == std::vector<std::uint64_t>{4, 3, 3});
    const auto d = largest_remainder(1, {0.5, 0.5});
    CHECK(d == std::vector<std::uint64_t>{1, 0});
}

TEST_CASE("deterministic beta traffic") {
    const auto w = beta_weights(beta_profile(200, true));
    // oracle: floor of the exact shares plus one for the largest fractions
    std::vector<std::uint64_t> ref(10);
    std::vector<std::pair<double, std::size_t>> frac;
    std::uint64_t assigned = 0;
    for (std::size_t i = 0; i < 10; ++i) {
        ref[i] = static_cast<std::uint64_t>(200 * w[i]);
        assigned += ref[i];
        frac.emplace_back(-(200 * w[i] - static_cast<double>(ref[i])), i);
    }
    std::sort(frac.begin(), frac.end());
    for (std::size_t k = 0; assigned < 200; ++k, ++assigned)
        ++ref[frac[k].second];

    TrafficGenerator gen(beta_profile(200, true));
    RngStream rng(1, streams::traffic);
    std::vector<std::uint64_t> first;
    for (FrameIndex t = 0; t < 10; ++t)
        first.push_back(gen.arrivals_at(t, rng));
    CHECK(first == ref);
    CHECK(std::accumulate(first.begin(), first.end(), 0ULL) == 200);
    const auto peak = std::max_element(first.begin(), first.end()) - first.begin();
    CHECK((peak == 3 || peak == 4));
    for (FrameIndex t = 0; t < 200; ++t)
        CHECK(gen.arrivals_at(t, rng) == gen.arrivals_at(t + 10, rng));
}

TEST_CASE("stochastic beta traffic conserves each period's total") {
    TrafficGenerator gen(beta_profile(200, false));
    RngStream rng(2, streams::traffic);
    std::vector<double> mean(10, 0.0);
    const int periods = 2000;
    for (int k = 0; k < periods; ++k) {
        std::uint64_t sum = 0;
        for (int i = 0; i < 10; ++i) {
            const auto a = gen.arrivals_at(k * 10 + i, rng);
            sum += a;
            mean[static_cast<std::size_t>(i)] += static_cast<double>(a) / periods;
        }
        CHECK(sum == 200);
    }
    const auto w = beta_weights(beta_profile(200, false));
    for (std::size_t i = 0; i < 10; ++i)
        CHECK(std::abs(mean[i] - 200 * w[i]) < 0.6);
}

TEST_CASE("zero, constant and poisson traffic") {
    RngStream rng(3, streams::traffic);
    for (bool det : {true, false}) {
        TrafficGenerator zero(beta_profile(0, det));
        for (FrameIndex t = 0; t < 30; ++t)
            CHECK(zero.arrivals_at(t, rng) == 0);
    }
    TrafficProfile c;
    c.kind = TrafficKind::constant;
    c.total_per_period = 100;
    TrafficGenerator constant(c);
    for (FrameIndex t = 0; t < 30; ++t)
        CHECK(constant.arrivals_at(t, rng) == 10);

    TrafficProfile p;
    p.kind = TrafficKind::poisson;
    p.total_per_period = 100;
    TrafficGenerator poisson(p);
    double sum = 0;
    for (FrameIndex t = 0; t < 20000; ++t)
        sum += static_cast<double>(poisson.arrivals_at(t, rng));
    CHECK(sum / 20000 == doctest::Approx(10.0).epsilon(0.02));
}

TEST_CASE("same seed, same arrivals") {
    auto draw = [](std::uint64_t seed) {
        TrafficGenerator gen(beta_profile(200, false));
        RngStream rng(seed, streams::traffic);
        std::vector<std::uint64_t> out;
        for (FrameIndex t = 0; t < 100; ++t)
            out.push_back(gen.arrivals_at(t, rng));
        return out;
    };
    CHECK(draw(4) == draw(4));
    CHECK(draw(4) != draw(5));
}
