#include <doctest.h>

#include <cmath>

#include "rach/estimators.hpp"
#include "rach/experiment.hpp"
#include "rach/sim.hpp"

using namespace rach;

TEST_CASE("frame accounting over random controls") {
    RngStream ctl(11, streams::dataset);
    Simulator sim(10, 54, 11);
    std::size_t backlog = 0;
    for (int t = 0; t < 3000; ++t) {
        const std::size_t arrivals = ctl.uniform_int(60);
        const ControlAction a{(1 + static_cast<double>(ctl.uniform_int(16))) / 16.0,
                              static_cast<int>(ctl.uniform_int(9)), 1 + static_cast<int>(ctl.uniform_int(54))};
        const auto rep = sim.step(a, arrivals);
        const auto& o = rep.observation;
        CHECK(o.idle + o.success + o.collision == a.num_channels);
        CHECK(rep.true_backlog == backlog + arrivals);
        CHECK(rep.successes.size() == static_cast<std::size_t>(o.success));
        // each collided channel holds at least two transmissions
        CHECK(rep.transmissions >= static_cast<std::size_t>(o.success + 2 * o.collision));
        CHECK(rep.transmissions <= rep.true_backlog);
        CHECK(sim.backlog_size() == rep.true_backlog - rep.successes.size() - rep.drops);
        for (const auto& s : rep.successes) {
            CHECK(s.delay >= 1);
            CHECK(s.attempts >= 1);
            CHECK(s.attempts <= 11); // L retransmissions after the first try
        }
        for (const auto& d : sim.devices())
            CHECK(d.attempts <= 10);
        backlog = sim.backlog_size();
    }
}

TEST_CASE("expected moments partition the channels") {
    for (int r : {1, 2, 7, 54})
        for (double n : {0.0, 0.5, 1.0, 3.7, 54.0, 300.0}) {
            const auto m = expected_moments(n, r);
            CHECK(m.idle + m.success + m.collision == doctest::Approx(r));
            CHECK(m.idle >= 0.0);
            CHECK(m.success >= 0.0);
            CHECK(m.collision >= -1e-12);
        }
}

TEST_CASE("estimators stay in range for every outcome on small frames") {
    for (int r : {2, 3, 8})
        for (int i = 0; i <= r; ++i)
            for (int s = 0; s + i <= r; ++s) {
                Observation o;
                o.idle = i;
                o.success = s;
                o.collision = r - i - s;
                for (double p : {1.0 / 64, 0.3, 1.0}) {
                    o.action = {p, 0, r};
                    const double hi = 200.0;
                    for (const auto& e : {estimators::mom_full(o, 200), estimators::mle_estimate(o, 200)}) {
                        CHECK(std::isfinite(e.value));
                        CHECK(e.value >= 0.0);
                        CHECK(e.value <= hi / std::max(p, 1.0 / 64) + 1e-9);
                    }
                    const auto c = estimators::mom_closed_form(o);
                    CHECK(std::isfinite(c.value));
                    CHECK(c.value >= 0.0);
                }
            }
}

TEST_CASE("debarring divides by the guarded ACB factor") {
    CHECK(estimators::debar(10, 0.5) == 20.0);
    CHECK(estimators::debar(10, 1.0) == 10.0);
    CHECK(estimators::debar(1, 0.0) == 64.0);
}

TEST_CASE("episode metrics stay in range for every optimizer") {
    for (auto opt : {OptimizerKind::genie, OptimizerKind::DA, OptimizerKind::MoM_idle, OptimizerKind::MoM_full,
                     OptimizerKind::MLE, OptimizerKind::SL_formula, OptimizerKind::tabularQ, OptimizerKind::DQN,
                     OptimizerKind::CPCL})
        for (auto scheme : {control::Scheme::ACB, control::Scheme::ACB_BO, control::Scheme::DRA}) {
            CAPTURE(to_string(opt));
            CAPTURE(to_string(scheme));
            ExperimentConfig c;
            c.optimizer = opt;
            c.scheme = scheme;
            c.episodes = 2;
            c.threads = 1;
            c.agent.hidden = {16};
            const auto r = run_experiment(c);
            for (const auto& t : r.trials) {
                long frame_successes = 0;
                for (const auto& f : t.frames) {
                    frame_successes += f.success;
                    CHECK(f.action.acb_factor > 0.0);
                    CHECK(f.action.acb_factor <= 1.0);
                    CHECK(f.action.num_channels >= 1);
                    CHECK(f.action.num_channels <= 54);
                    if (scheme != control::Scheme::ACB_BO)
                        CHECK(f.action.backoff_window == 0);
                    if (f.predicted) {
                        CHECK(*f.predicted >= 0.0);
                        CHECK(*f.predicted <= 540.0);
                    }
                    if (f.label) {
                        CHECK(*f.label >= 0.0);
                        CHECK(*f.label <= 540.0);
                    }
                }
                long episode_successes = 0;
                for (const auto& m : t.episodes) {
                    episode_successes += m.successes;
                    CHECK(m.access_success_prob >= 0.0);
                    CHECK(m.access_success_prob <= 1.0);
                    CHECK(m.successes >= 0);
                    CHECK(m.drops >= 0);
                    CHECK(m.transmissions >= m.successes);
                    if (m.successes > 0)
                        CHECK(m.mean_delay >= 1.0);
                }
                CHECK(frame_successes == episode_successes);
            }
        }
}

TEST_CASE("backlog is cleared at every episode start") {
    ExperimentConfig c;
    c.optimizer = OptimizerKind::DA;
    c.episodes = 4;
    c.threads = 1;
    const auto r = run_experiment(c);
    for (const auto& f : r.trials[0].frames)
        if (f.frame == 0)
            CHECK(f.true_backlog == f.arrivals);
}
