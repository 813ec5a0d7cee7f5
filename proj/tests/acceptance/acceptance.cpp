// Acceptance runner. Each criterion prints one PASS/FAIL line; the exit
// status is nonzero when any requested criterion fails.
//
//   acceptance [id ...]     ids 1-10, default all

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/core.h>

#include "gradcheck.hpp"
#include "rach/experiment.hpp"
#include "rach/pretrain.hpp"

using namespace rach;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
};

double rel_err(double got, double want) { return std::abs(got - want) / std::abs(want); }

// ---------------------------------------------------------------- 1

Outcome moments_fidelity() {
    constexpr int kFrames = 100000;
    constexpr int kChannels = 54;
    Outcome out{true, ""};
    for (int n : {10, 54, 150}) {
        Backlog b;
        advance_backlog(b, static_cast<std::size_t>(n), 0);
        RngStream rng(1000 + static_cast<std::uint64_t>(n), streams::channel);
        double si = 0, ss = 0, sc = 0;
        for (int f = 0; f < kFrames; ++f) {
            const auto o = run_frame(b.devices, ControlAction{1.0, 0, kChannels}, 10, 0, rng).report.observation;
            si += o.idle;
            ss += o.success;
            sc += o.collision;
        }
        const auto e = expected_moments(n, kChannels);
        const double worst = std::max({rel_err(si / kFrames, e.idle), rel_err(ss / kFrames, e.success),
                                       rel_err(sc / kFrames, e.collision)});
        out.pass = out.pass && worst <= 0.01;
        out.detail += fmt::format("n={}: max rel err {:.4f}; ", n, worst);
    }
    return out;
}

// ---------------------------------------------------------------- 2

// Counts every one of r^m channel choices.
std::map<std::pair<int, int>, double> enumerate_outcomes(int m, int r) {
    std::map<std::pair<int, int>, double> counts;
    std::vector<int> choice(static_cast<std::size_t>(m), 0);
    const double total = std::pow(r, m);
    while (true) {
        std::vector<int> occ(static_cast<std::size_t>(r), 0);
        for (int c : choice)
            ++occ[static_cast<std::size_t>(c)];
        int idle = 0, success = 0;
        for (int k : occ) {
            idle += k == 0;
            success += k == 1;
        }
        counts[{idle, success}] += 1.0 / total;
        int pos = 0;
        while (pos < m && ++choice[static_cast<std::size_t>(pos)] == r)
            choice[static_cast<std::size_t>(pos++)] = 0;
        if (pos == m)
            break;
    }
    return counts;
}

Outcome mle_exactness() {
    double worst_cell = 0.0, worst_sum = 0.0;
    for (int r = 1; r <= 4; ++r)
        for (int m = 0; m <= 6; ++m) {
            const auto oracle = enumerate_outcomes(m, r);
            const auto dist = estimators::mle_outcome_distribution(m, r);
            for (int i = 0; i <= r; ++i)
                for (int s = 0; s + i <= r; ++s) {
                    auto it = oracle.find({i, s});
                    const double want = it == oracle.end() ? 0.0 : it->second;
                    worst_cell = std::max(worst_cell, std::abs(dist.at(i, s) - want));
                }
        }
    for (int r = 1; r <= 8; ++r)
        for (int m = 0; m <= 50; ++m)
            worst_sum = std::max(worst_sum, std::abs(estimators::mle_outcome_distribution(m, r).total() - 1.0));
    return {worst_cell <= 1e-12 && worst_sum <= 1e-12,
            fmt::format("max |P - enumeration| = {:.2e} (m<=6, r<=4); max |sum - 1| = {:.2e} (m<=50, r<=8)",
                        worst_cell, worst_sum)};
}

// ---------------------------------------------------------------- 3

Outcome gradient_correctness() {
    using namespace rach::nn;
    RngStream rng(3, streams::init);
    int instances = 0;
    double worst = 0.0;
    // dense stacks
    const std::vector<std::vector<int>> shapes{{3, 4, 2}, {5, 8, 8, 1}, {4, 6, 5, 3}, {2, 16, 4}, {5, 64, 64, 1}};
    for (std::size_t k = 0; k < 10; ++k) {
        const auto act = k % 2 == 0 ? Activation::tanh : Activation::relu;
        Mlp net = gradcheck::random_mlp(shapes[k % shapes.size()], act, rng);
        std::vector<Sample> batch;
        for (int b = 0; b < 3; ++b) {
            Sample s{gradcheck::random_vector(net.inputs(), rng), gradcheck::random_vector(net.outputs(), rng, 2.0),
                     {}};
            if (k >= 6) {
                s.mask = Vector::Zero(net.outputs());
                s.mask[static_cast<Eigen::Index>(rng.uniform_int(static_cast<std::uint64_t>(net.outputs())))] = 1.0;
            }
            batch.push_back(std::move(s));
        }
        worst = std::max(worst, gradcheck::mlp_check(net, k % 3 == 0 ? Loss::huber : Loss::mse, batch));
        ++instances;
    }
    // LSTM regressors, gradients through up to 10 time steps
    for (int k = 0; k < 12; ++k) {
        const int input = 1 + k % 5, hidden = 2 + k % 4, steps = 1 + k % 10;
        LstmRegressor net(input, hidden, 1 + k % 2, rng);
        net.cell().bias = gradcheck::random_vector(4 * hidden, rng, 0.5);
        std::vector<SequenceSample> batch;
        for (int b = 0; b < 2; ++b)
            batch.push_back({gradcheck::random_matrix(input, steps, rng), gradcheck::random_vector(1 + k % 2, rng)});
        worst = std::max(worst, gradcheck::lstm_check(net, k % 4 == 3 ? Loss::huber : Loss::mse, batch));
        ++instances;
    }
    return {instances >= 20 && worst < 1e-4,
            fmt::format("{} instances (10 dense, 12 LSTM through 1-10 steps); worst relative error {:.2e}", instances,
                        worst)};
}

// ---------------------------------------------------------------- 4

Outcome estimator_ranking() {
    constexpr int kFrames = 10000;
    constexpr int kChannels = 54;
    RngStream draw(4, streams::dataset), chan(4, streams::channel);
    double mle = 0, full = 0, idle = 0;
    for (int f = 0; f < kFrames; ++f) {
        const int n = static_cast<int>(draw.uniform_int(2 * kChannels + 1));
        Backlog b;
        advance_backlog(b, static_cast<std::size_t>(n), 0);
        const auto o = run_frame(b.devices, ControlAction{1.0, 0, kChannels}, 10, 0, chan).report.observation;
        mle += std::abs(estimators::mle_estimate(o, 540).value - n);
        full += std::abs(estimators::mom_full(o, 540).value - n);
        idle += std::abs(estimators::mom_closed_form(o).value - n);
    }
    mle /= kFrames;
    full /= kFrames;
    idle /= kFrames;
    return {mle <= full && full <= idle + 1.0,
            fmt::format("MAE over {} frames, N ~ U{{0..{}}}, p=1: MLE {:.3f}, MoM-full {:.3f}, MoM-idle {:.3f}",
                        kFrames, 2 * kChannels, mle, full, idle)};
}

// ---------------------------------------------------------------- 5

Outcome predictor_advantage() {
    ExperimentConfig c;
    c.optimizer = OptimizerKind::SL_formula;
    c.episodes = 1000; // 10^5 frames
    c.seed = 5;
    c.threads = 1;
    std::vector<double> losses;
    RunOptions o;
    o.inspect = [&](int, control::Optimizer& opt) {
        losses = dynamic_cast<control::TwoStepOptimizer&>(opt).update_losses();
    };
    const auto r = run_experiment(c, o);
    const auto& frames = r.trials.front().frames;

    // Last 10^3 frames. The MoM-full one-frame-ahead value for frame t is its
    // estimate from frame t-1, i.e. what the MoM controller acts on; frames
    // that open an episode have no such estimate and are skipped.
    const std::size_t first = frames.size() - 1000;
    double lstm = 0, mom_ahead = 0, mom_same = 0;
    int n = 0;
    for (std::size_t i = first; i < frames.size(); ++i) {
        if (frames[i].frame == 0)
            continue;
        const double truth = static_cast<double>(frames[i].true_backlog);
        lstm += std::abs(*frames[i].predicted - truth);
        mom_ahead += std::abs(*frames[i - 1].label - truth);
        mom_same += std::abs(*frames[i].label - truth);
        ++n;
    }
    lstm /= n;
    mom_ahead /= n;
    mom_same /= n;

    // Peak frame of every traffic period in the last 10^4 frames.
    const int period = c.traffic.period;
    double peak_lstm = 0, peak_mom = 0;
    int peaks = 0;
    for (std::size_t s = frames.size() - 10000; s < frames.size(); s += static_cast<std::size_t>(period)) {
        std::size_t k = s;
        for (std::size_t j = s; j < s + static_cast<std::size_t>(period); ++j)
            if (frames[j].true_backlog > frames[k].true_backlog)
                k = j;
        if (frames[k].frame == 0)
            continue;
        const double truth = static_cast<double>(frames[k].true_backlog);
        peak_lstm += std::abs(*frames[k].predicted - truth);
        peak_mom += std::abs(*frames[k - 1].label - truth);
        ++peaks;
    }
    peak_lstm /= peaks;
    peak_mom /= peaks;

    // Stability: the update loss settles instead of diverging.
    const std::size_t w = 1000;
    const double head = stats::mean(std::span(losses).first(w));
    const double tail = stats::mean(std::span(losses).last(w));

    const bool pass = lstm < mom_ahead && lstm < mom_same && peak_lstm < peak_mom && tail < head;
    return {pass, fmt::format("last 1e3 frames MAE: LSTM {:.2f}, MoM-full one frame ahead {:.2f}, MoM-full same "
                              "frame {:.2f}; peak-frame MAE over {} periods: LSTM {:.2f} vs MoM-full {:.2f}; "
                              "update loss first/last 1e3 mean {:.1f}/{:.1f}",
                              lstm, mom_ahead, mom_same, peaks, peak_lstm, peak_mom, head, tail)};
}

// ---------------------------------------------------------------- 6

Outcome fig5_ordering() {
    constexpr int kWarmup = 100;   // online LSTM training before evaluation starts
    constexpr int kEval = 3000;    // paired evaluation episodes
    auto run = [&](OptimizerKind kind) {
        ExperimentConfig c;
        c.optimizer = kind;
        c.episodes = kWarmup + kEval;
        c.seed = 6;
        c.threads = 1;
        RunOptions o;
        o.keep_frames = false;
        const auto result = run_experiment(c, o);
        std::vector<double> s;
        for (const auto& m : result.trials.front().episodes)
            if (m.episode >= kWarmup)
                s.push_back(static_cast<double>(m.successes));
        return s;
    };
    const auto genie = run(OptimizerKind::genie);
    const auto sl = run(OptimizerKind::SL_formula);
    const auto mom = run(OptimizerKind::MoM_full);
    const auto g_sl = stats::paired(genie, sl);
    const auto sl_mom = stats::paired(sl, mom);
    return {g_sl.lower_bound >= 0.0 && sl_mom.lower_bound >= 0.0,
            fmt::format("{} paired episodes; means genie {:.2f}, SL {:.2f}, MoM-full {:.2f}; genie-SL {:.2f} (95% "
                        "lower bound {:.2f}); SL-MoM {:.2f} (95% lower bound {:.2f})",
                        genie.size(), g_sl.mean_a, g_sl.mean_b, sl_mom.mean_b, g_sl.mean_diff, g_sl.lower_bound,
                        sl_mom.mean_diff, sl_mom.lower_bound)};
}

// ---------------------------------------------------------------- 7, 8

struct LearningRuns {
    ExperimentResult cpcl;
    ExperimentResult dqn;
    double corrector_mae = 0;
    double pretrain_trained = 0;
    double pretrain_untrained = 0;
};

constexpr int kTrials = 20;
constexpr int kEpisodes = 200;
constexpr int kConvergedTail = 50;

const LearningRuns& learning_runs() {
    static const LearningRuns runs = [] {
        LearningRuns out;
        ExperimentConfig base;
        base.scheme = control::Scheme::ACB_BO;
        base.threads = 0;

        // Offline phase on seeds the online runs never use.
        ExperimentConfig pre = base;
        pre.optimizer = OptimizerKind::CPCL;
        pre.seed = 701;
        const auto corr = pretrain_corrector(pre, pre.seed);
        out.corrector_mae = corr.holdout_mae;
        auto corrector = std::make_shared<const predictor::DnnCorrector>(corr.training.model);
        pre.episodes = 300;
        RunOptions pre_opts;
        pre_opts.corrector = corrector;
        const auto agent = pretrain_agent(pre, 20, pre_opts);
        out.pretrain_trained = agent.trained_eval_mean;
        out.pretrain_untrained = agent.untrained_eval_mean;

        // Online phase: pretrained CPCL keeps learning at the exploration floor.
        ExperimentConfig cpcl = base;
        cpcl.optimizer = OptimizerKind::CPCL;
        cpcl.seed = 8;
        cpcl.trials = kTrials;
        cpcl.episodes = kEpisodes;
        cpcl.agent.epsilon_start = cpcl.agent.epsilon_floor;
        RunOptions cpcl_opts;
        cpcl_opts.keep_frames = false;
        cpcl_opts.corrector = corrector;
        cpcl_opts.checkpoint = agent.checkpoint;
        out.cpcl = run_experiment(cpcl, cpcl_opts);

        ExperimentConfig dqn = cpcl;
        dqn.optimizer = OptimizerKind::DQN;
        dqn.agent = AgentHyper{};
        RunOptions dqn_opts;
        dqn_opts.keep_frames = false;
        out.dqn = run_experiment(dqn, dqn_opts);
        return out;
    }();
    return runs;
}

Outcome fig6_property() {
    const auto& r = learning_runs();
    const auto cmp = compare({r.cpcl, r.dqn}, {PairUnit::trial, kConvergedTail});
    const auto& s = cmp.pairs.front().summary;
    return {s.lower_bound >= 0.0,
            fmt::format("ACB_BO, {} paired trials, mean of the last {} of {} episodes: CPCL {:.2f}, DQN {:.2f}; "
                        "difference {:.2f} (95% lower bound {:.2f})",
                        s.n, kConvergedTail, kEpisodes, s.mean_a, s.mean_b, s.mean_diff, s.lower_bound)};
}

Outcome fig7_property() {
    const auto& r = learning_runs();
    const auto cpcl = stats::convergence_report(mean_curve(r.cpcl));
    const auto dqn = stats::convergence_report(mean_curve(r.dqn));
    const bool both = cpcl.converged && dqn.converged;
    const double ratio = both ? static_cast<double>(dqn.episode) / cpcl.episode : 0.0;
    return {both && ratio >= 10.0,
            fmt::format("curves averaged over {} trials, window {}, tolerance {:.0f}%: pretrained CPCL converges at "
                        "episode {} (plateau {:.1f}), scratch DQN at episode {} (plateau {:.1f}); ratio {:.1f}. "
                        "Offline phase: corrector held-out MAE {:.2f}, pretrained agent greedy eval {:.1f} vs "
                        "untrained {:.1f}",
                        kTrials, cpcl.window, 100 * cpcl.tolerance, cpcl.converged ? cpcl.episode : -1,
                        cpcl.final_mean, dqn.converged ? dqn.episode : -1, dqn.final_mean, ratio, r.corrector_mae,
                        r.pretrain_trained, r.pretrain_untrained)};
}

// ---------------------------------------------------------------- 9

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome determinism() {
    const fs::path root = fs::temp_directory_path() / "rach_acceptance_determinism";
    fs::remove_all(root);
    int files = 0;
    std::vector<std::string> differing;
    auto check_dirs = [&](const fs::path& a, const fs::path& b) {
        for (const auto& e : fs::directory_iterator(a)) {
            ++files;
            if (slurp(e.path()) != slurp(b / e.path().filename()))
                differing.push_back(e.path().string());
        }
    };
    for (auto [scheme, opt] : {std::pair{control::Scheme::ACB, OptimizerKind::SL_formula},
                               std::pair{control::Scheme::ACB_BO, OptimizerKind::DQN},
                               std::pair{control::Scheme::ACB_BO, OptimizerKind::CPCL},
                               std::pair{control::Scheme::DRA, OptimizerKind::tabularQ},
                               std::pair{control::Scheme::ACB, OptimizerKind::MLE}}) {
        ExperimentConfig c;
        c.scheme = scheme;
        c.optimizer = opt;
        c.trials = 3;
        c.episodes = 3;
        c.seed = 9;
        c.threads = 2;
        const std::string tag = std::string(to_string(opt));
        for (const char* run : {"a", "b"})
            write_outputs(run_experiment(c), root / tag / run);
        check_dirs(root / tag / "a", root / tag / "b");
    }
    ExperimentConfig pc;
    pc.optimizer = OptimizerKind::CPCL;
    pc.corrector.dataset_pairs = 5000;
    pc.corrector.epochs = 2;
    // same command twice into the same directory
    const fs::path pre = root / "pretrain";
    run_pretrain(pc, PretrainTarget::dnn_corrector, pre / "corrector.rachnn", pre);
    fs::copy(pre, root / "pretrain_first", fs::copy_options::recursive);
    run_pretrain(pc, PretrainTarget::dnn_corrector, pre / "corrector.rachnn", pre);
    check_dirs(root / "pretrain_first", pre);
    fs::remove_all(root);
    std::string which;
    for (const auto& d : differing)
        which += " " + d;
    return {differing.empty() && files > 0,
            fmt::format("{} output files compared across reruns (CSV, summaries, checkpoints); {} differ{}", files,
                        differing.size(), which)};
}

// ---------------------------------------------------------------- 10

Outcome toy_mdp() {
    // s' = a; r(0,0)=1, r(0,1)=0, r(1,0)=0, r(1,1)=2
    const double reward[2][2] = {{1.0, 0.0}, {0.0, 2.0}};
    const double gamma = 0.9;
    double q[2][2] = {{0, 0}, {0, 0}};
    for (int it = 0; it < 2000; ++it) {
        double next[2][2];
        for (int s = 0; s < 2; ++s)
            for (int a = 0; a < 2; ++a)
                next[s][a] = reward[s][a] + gamma * std::max(q[a][0], q[a][1]);
        std::copy(&next[0][0], &next[0][0] + 4, &q[0][0]);
    }
    const int vi[2] = {q[0][1] > q[0][0] ? 1 : 0, q[1][1] > q[1][0] ? 1 : 0};

    control::TabularQ table(2);
    for (int n = 0; n < 100000; ++n) {
        const int s = (n / 2) % 2, a = n % 2;
        table.update(s, a, reward[s][a], a, false, 0.1, gamma);
    }

    RngStream init(10, streams::init), rng(10, streams::replay);
    control::DqnConfig cfg;
    cfg.hidden = {16};
    cfg.gamma = gamma;
    cfg.adam.learning_rate = 3e-3;
    control::DqnAgent agent(2, 2, cfg, init);
    auto one_hot = [](int s) {
        nn::Vector v = nn::Vector::Zero(2);
        v[s] = 1.0;
        return v;
    };
    for (int rep = 0; rep < 16; ++rep)
        for (int s = 0; s < 2; ++s)
            for (int a = 0; a < 2; ++a)
                agent.remember({one_hot(s), a, reward[s][a], one_hot(a), false});
    for (int step = 0; step < 8000; ++step)
        agent.train_step(rng);

    bool pass = true;
    std::string detail = fmt::format("value iteration optimum ({}, {});", vi[0], vi[1]);
    for (int s = 0; s < 2; ++s) {
        const int tab = table.greedy(s);
        const auto qd = agent.online().forward(one_hot(s));
        const int dqn = control::argmax(qd);
        pass = pass && tab == vi[s] && dqn == vi[s];
        detail += fmt::format(" state {}: tabular {} (Q err {:.1e}), DQN {} (Q {:.2f}/{:.2f} vs {:.2f}/{:.2f});", s,
                              tab, std::max(std::abs(table.value(s, 0) - q[s][0]), std::abs(table.value(s, 1) - q[s][1])),
                              dqn, qd[0], qd[1], q[s][0], q[s][1]);
    }
    return {pass, detail};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<Criterion> all{
        {1, "moment-formula fidelity", moments_fidelity},
        {2, "MLE exactness", mle_exactness},
        {3, "gradient correctness", gradient_correctness},
        {4, "estimator ranking", estimator_ranking},
        {5, "predictor advantage", predictor_advantage},
        {6, "genie >= SL+formula >= MoM+formula", fig5_ordering},
        {7, "converged CPCL >= converged DQN on ACB_BO", fig6_property},
        {8, "pretrained CPCL converges >= 10x faster than scratch DQN", fig7_property},
        {9, "determinism", determinism},
        {10, "toy-MDP oracle", toy_mdp},
    };
    std::set<int> wanted;
    for (int i = 1; i < argc; ++i)
        wanted.insert(std::atoi(argv[i]));
    bool ok = true;
    for (const auto& c : all) {
        if (!wanted.empty() && !wanted.count(c.id))
            continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        fmt::print("{} criterion {} ({}): {} [{:.1f} s]\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail, secs);
        std::fflush(stdout);
        ok = ok && o.pass;
    }
    return ok ? 0 : 1;
}
