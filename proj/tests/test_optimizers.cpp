#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "rach/optimizers.hpp"
#include "rach/traffic.hpp"

using namespace rach;
using namespace rach::control;

namespace {

struct Trace {
    std::vector<int> successes;
    std::vector<ControlAction> actions;
};

// Minimal frame loop, independent of the experiment runner.
Trace drive(Optimizer& opt, std::uint64_t seed, int episodes, int length,
            const std::function<void(const Observation&)>& after_observe = {}) {
    TrafficGenerator traffic(TrafficProfile{});
    RngStream traffic_rng(seed, streams::traffic);
    Simulator sim(10, 54, seed);
    Trace out;
    for (int e = 0; e < episodes; ++e) {
        sim.reset_backlog();
        opt.begin_episode();
        for (int f = 0; f < length; ++f) {
            const auto arrivals = static_cast<std::size_t>(traffic.arrivals_at(sim.frame(), traffic_rng));
            FrameContext ctx{sim.frame(), std::nullopt};
            if (opt.needs_ground_truth())
                ctx.true_backlog = sim.backlog_size() + arrivals;
            const auto action = opt.decide(ctx);
            const auto rep = sim.step(action, arrivals);
            opt.observe(rep.observation);
            if (after_observe)
                after_observe(rep.observation);
            out.successes.push_back(rep.observation.success);
            out.actions.push_back(action);
        }
        opt.end_episode();
    }
    return out;
}

ControlSettings settings(Scheme scheme) {
    ControlSettings s;
    s.scheme = scheme;
    s.base = {1.0, 0, 54};
    return s;
}

AgentSettings small_agents() {
    AgentSettings a;
    a.dqn.hidden = {16};
    a.dqn.batch = 8;
    a.epsilon_decay = 0.99;
    return a;
}

bool on_grid(const ControlAction& a, const ActionGrid& g, Scheme scheme) {
    const bool acb = std::find(g.acb_levels.begin(), g.acb_levels.end(), a.acb_factor) != g.acb_levels.end();
    const bool bo = std::find(g.bo_levels.begin(), g.bo_levels.end(), a.backoff_window) != g.bo_levels.end();
    switch (scheme) {
    case Scheme::ACB: return acb && a.backoff_window == 0;
    case Scheme::ACB_BO: return acb && bo;
    case Scheme::DRA:
        return std::find(g.channel_levels.begin(), g.channel_levels.end(), a.num_channels) != g.channel_levels.end();
    }
    return false;
}

}  // namespace

TEST_CASE("rule_action") {
    auto s = settings(Scheme::ACB);
    CHECK(rule_action(108, s).acb_factor == 0.5);
    s.scheme = Scheme::DRA;
    CHECK(rule_action(0, s).num_channels == 6);
    CHECK(rule_action(13, s).num_channels == 18);
    CHECK(rule_action(13, s).acb_factor == 1.0);
    CHECK(rule_action(1000, s).num_channels == 54);
}

TEST_CASE("genie optimizer needs the truth") {
    GenieOptimizer g(settings(Scheme::ACB));
    CHECK(g.needs_ground_truth());
    CHECK_THROWS(g.decide({0, std::nullopt}));
    CHECK(g.decide({0, 108}).acb_factor == 0.5);
    CHECK(g.prediction() == 108.0);
}

TEST_CASE("two-step optimizer with a genie predictor and formula policy equals genie") {
    GenieOptimizer genie(settings(Scheme::ACB));
    TwoStepSettings ts;
    ts.genie_predictor = true;
    TwoStepOptimizer two(settings(Scheme::ACB), ts, 42);
    const auto a = drive(genie, 42, 5, 100);
    const auto b = drive(two, 42, 5, 100);
    CHECK(a.successes == b.successes);
    CHECK(a.actions == b.actions);
}

TEST_CASE("each label is created once and consumed once, one frame later") {
    TwoStepOptimizer two(settings(Scheme::ACB), TwoStepSettings{}, 3);
    long frames = 0;
    drive(two, 3, 3, 50, [&](const Observation& o) {
        ++frames;
        CHECK(two.labels_created() == frames);
        CHECK(two.labels_consumed() == frames - 1);
        // the label is a function of this frame's observation alone
        CHECK(*two.label() == std::min(estimators::mom_full(o, 540).value, 540.0));
    });
    CHECK(two.labels_consumed() == frames);
    CHECK(two.update_losses().size() == static_cast<std::size_t>(frames));
}

TEST_CASE("missing corrector falls back to MoM-full labels") {
    TwoStepSettings ts;
    ts.label_source = LabelSource::DNN;
    TwoStepOptimizer two(settings(Scheme::ACB), ts, 1);
    CHECK(two.effective_label_source() == LabelSource::MoM_full);
}

TEST_CASE("emitted actions stay on the grid") {
    for (Scheme scheme : {Scheme::ACB, Scheme::ACB_BO, Scheme::DRA}) {
        CAPTURE(static_cast<int>(scheme));
        const auto s = settings(scheme);
        DqnOptimizer dqn(s, small_agents(), 10, 5);
        for (const auto& a : drive(dqn, 5, 2, 100).actions) {
            CHECK(on_grid(a, s.grid, scheme));
            CHECK_NOTHROW(validate(a, 54));
        }
        TwoStepSettings ts;
        ts.agents = small_agents();
        TwoStepOptimizer cpcl(s, ts, 5);
        for (const auto& a : drive(cpcl, 5, 2, 100).actions)
            CHECK(on_grid(a, s.grid, scheme));
        TabularQOptimizer tab(s, TabularSettings{}, 5);
        for (const auto& a : drive(tab, 5, 2, 100).actions)
            CHECK(on_grid(a, s.grid, scheme));
    }
}

TEST_CASE("estimator optimizers configure the next frame from this frame's estimate") {
    EstimatorOptimizer mom(settings(Scheme::ACB), EstimatorSettings{EstimatorKind::MoM_full});
    CHECK(mom.name() == "MoM_full");
    mom.begin_episode();
    CHECK(mom.decide({0, std::nullopt}).acb_factor == 1.0);
    Observation o;
    o.idle = 0;
    o.success = 0;
    o.collision = 54;
    o.action = {1.0, 0, 54};
    mom.observe(o);
    CHECK(*mom.label() == 540.0);
    const auto next = mom.decide({1, std::nullopt});
    CHECK(next.acb_factor == doctest::Approx(0.1));
    CHECK(*mom.prediction() == 540.0);
    CHECK_THROWS(estimate_backlog(EstimatorKind::DA, o, 540));
}

TEST_CASE("frozen evaluation is deterministic") {
    const auto s = settings(Scheme::ACB_BO);
    TwoStepSettings ts;
    ts.agents = small_agents();
    TwoStepOptimizer trained(s, ts, 9);
    drive(trained, 9, 3, 100);
    const auto ckpt = trained.checkpoint();

    auto evaluate = [&] {
        TwoStepOptimizer opt(s, ts, 77);
        opt.load_checkpoint(ckpt);
        opt.set_learning(false);
        opt.set_exploration(0.0);
        return drive(opt, 1234, 2, 100);
    };
    const auto a = evaluate();
    const auto b = evaluate();
    CHECK(a.successes == b.successes);
    CHECK(a.actions == b.actions);
}

TEST_CASE("frozen optimizers do not change their parameters") {
    const auto s = settings(Scheme::ACB);
    DqnOptimizer dqn(s, small_agents(), 10, 4);
    dqn.set_learning(false);
    const auto before = dqn.checkpoint();
    drive(dqn, 4, 2, 100);
    const auto after = dqn.checkpoint();
    REQUIRE(before.size() == after.size());
    for (std::size_t k = 0; k < before.size(); ++k)
        CHECK(before[k].values == after[k].values);
}

TEST_CASE("checkpoint shape is checked") {
    const auto s = settings(Scheme::ACB);
    TwoStepOptimizer formula(s, TwoStepSettings{}, 1);
    TwoStepSettings ts;
    ts.agents = small_agents();
    TwoStepOptimizer cpcl(s, ts, 1);
    CHECK_THROWS(formula.load_checkpoint(cpcl.checkpoint()));
    CHECK_NOTHROW(cpcl.load_checkpoint(cpcl.checkpoint()));
    GenieOptimizer genie(s);
    CHECK_THROWS(genie.load_checkpoint(cpcl.checkpoint()));
}

TEST_CASE("agent driver stores terminal transitions at episode end") {
    const auto s = settings(Scheme::ACB);
    DqnOptimizer dqn(s, small_agents(), 10, 2);
    drive(dqn, 2, 2, 20);
    CHECK(dqn.driver().transitions() == 40);
    const auto& buf = dqn.driver().agents().agents().front().buffer();
    int terminals = 0;
    for (std::size_t i = 0; i < buf.size(); ++i)
        terminals += buf[i].terminal ? 1 : 0;
    CHECK(terminals == 2);
    CHECK(dqn.driver().epsilon() < 1.0);
}

TEST_CASE("tabular Q buckets") {
    TabularQOptimizer tab(settings(Scheme::ACB), TabularSettings{}, 1);
    CHECK(tab.bucket(0) == 0);
    CHECK(tab.bucket(13.4) == 0);
    CHECK(tab.bucket(13.5) == 1);
    CHECK(tab.bucket(1e6) == 39);
}
