#include "rach/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include <fmt/format.h>

#include "rach/checkpoint.hpp"

namespace rach {

std::uint64_t trial_seed(std::uint64_t master, int trial) {
    return derive_seed(master, static_cast<std::uint64_t>(trial));
}

std::shared_ptr<const predictor::DnnCorrector> load_corrector(const ExperimentConfig& config,
                                                              const std::filesystem::path& path) {
    const auto records = nn::read_checkpoint(path);
    return std::make_shared<const predictor::DnnCorrector>(corrector_config(config),
                                                           nn::mlp_from_records(records, 0, records.size()));
}

namespace {

control::AgentSettings agent_settings(const ExperimentConfig& c) {
    control::AgentSettings a;
    a.dqn.hidden = c.agent.hidden;
    a.dqn.gamma = c.agent.gamma;
    a.dqn.batch = c.agent.batch;
    a.dqn.target_refresh = c.agent.target_refresh;
    a.dqn.capacity = c.agent.buffer;
    a.dqn.adam.learning_rate = c.agent.learning_rate;
    a.epsilon_start = c.agent.epsilon_start;
    a.epsilon_floor = c.agent.epsilon_floor;
    a.epsilon_decay = c.agent.epsilon_decay;
    a.joint = c.agent.joint;
    return a;
}

predictor::PredictorConfig predictor_config(const ExperimentConfig& c) {
    predictor::PredictorConfig p;
    p.window = c.predictor.window;
    p.hidden = c.predictor.hidden;
    p.scale = c.channels;
    p.cap = c.backlog_cap;
    p.batch = c.predictor.batch;
    p.replay = c.predictor.replay;
    p.adam.learning_rate = c.predictor.learning_rate;
    return p;
}

}  // namespace

std::unique_ptr<control::Optimizer> make_optimizer(const ExperimentConfig& c, std::uint64_t seed,
                                                   std::shared_ptr<const predictor::DnnCorrector> corrector) {
    using namespace control;
    const ControlSettings settings = control_settings(c);
    auto estimator = [&](EstimatorKind kind) {
        EstimatorSettings e;
        e.kind = kind;
        e.search_max = c.backlog_cap;
        e.da.drift_coefficient = c.da_drift;
        e.da.arrival_rate = mean_arrivals_per_frame(c.traffic);
        return std::make_unique<EstimatorOptimizer>(settings, e);
    };
    switch (c.optimizer) {
    case OptimizerKind::genie: return std::make_unique<GenieOptimizer>(settings);
    case OptimizerKind::DA: return estimator(EstimatorKind::DA);
    case OptimizerKind::MoM_idle: return estimator(EstimatorKind::MoM_idle);
    case OptimizerKind::MoM_full: return estimator(EstimatorKind::MoM_full);
    case OptimizerKind::MLE: return estimator(EstimatorKind::MLE);
    case OptimizerKind::tabularQ: {
        TabularSettings t;
        t.alpha = c.tabular.alpha;
        t.gamma = c.agent.gamma;
        t.bucket_width = c.tabular.bucket_width;
        t.buckets = c.tabular.buckets;
        t.epsilon_start = c.agent.epsilon_start;
        t.epsilon_floor = c.agent.epsilon_floor;
        t.epsilon_decay = c.agent.epsilon_decay;
        t.search_max = c.backlog_cap;
        return std::make_unique<TabularQOptimizer>(settings, t, seed);
    }
    case OptimizerKind::DQN:
        return std::make_unique<DqnOptimizer>(settings, agent_settings(c), c.predictor.window, seed);
    case OptimizerKind::SL_formula:
    case OptimizerKind::CPCL: {
        TwoStepSettings t;
        t.predictor = predictor_config(c);
        t.label_source = effective_label_source(c);
        t.search_max = c.backlog_cap;
        if (c.optimizer == OptimizerKind::CPCL)
            t.agents = agent_settings(c);
        t.state_includes_observations = c.agent.state_includes_observations;
        if (t.label_source != LabelSource::DNN)
            corrector.reset();
        return std::make_unique<TwoStepOptimizer>(settings, t, seed, std::move(corrector));
    }
    }
    throw std::logic_error("make_optimizer: unhandled optimizer");
}

TrialResult run_trial(const ExperimentConfig& c, int trial, const RunOptions& options) {
    const std::uint64_t seed = trial_seed(c.seed, trial);
    auto corrector = options.corrector;
    if (!corrector && c.corrector_checkpoint && effective_label_source(c) == control::LabelSource::DNN &&
        (c.optimizer == OptimizerKind::CPCL || c.optimizer == OptimizerKind::SL_formula))
        corrector = load_corrector(c, *c.corrector_checkpoint);
    auto opt = make_optimizer(c, seed, corrector);
    if (options.checkpoint)
        opt->load_checkpoint(*options.checkpoint);
    else if (c.checkpoint)
        opt->load_checkpoint(nn::read_checkpoint(*c.checkpoint));
    opt->set_learning(c.learning);
    opt->set_exploration(c.eval_epsilon);

    TrafficGenerator traffic(c.traffic);
    RngStream traffic_rng(seed, streams::traffic);
    Simulator sim(c.retransmission_limit, c.channels, seed);

    TrialResult out;
    out.episodes.reserve(static_cast<std::size_t>(c.episodes));
    if (options.keep_frames)
        out.frames.reserve(static_cast<std::size_t>(c.episodes) * static_cast<std::size_t>(c.episode_length));
    const bool truth = opt->needs_ground_truth();
    for (int ep = 0; ep < c.episodes; ++ep) {
        sim.reset_backlog();
        opt->begin_episode();
        EpisodeMetrics m;
        m.trial = trial;
        m.episode = ep;
        double delay_sum = 0.0;
        double abs_err = 0.0;
        int predicted_frames = 0;
        for (int f = 0; f < c.episode_length; ++f) {
            const auto arrivals = static_cast<std::size_t>(traffic.arrivals_at(sim.frame(), traffic_rng));
            control::FrameContext ctx{sim.frame(), std::nullopt};
            if (truth)
                ctx.true_backlog = sim.backlog_size() + arrivals;
            const ControlAction action = opt->decide(ctx);
            const FrameReport rep = sim.step(action, arrivals);
            const auto prediction = opt->prediction();
            opt->observe(rep.observation);

            m.successes += rep.observation.success;
            m.arrivals += static_cast<long>(rep.new_arrivals);
            m.transmissions += static_cast<long>(rep.transmissions);
            m.drops += static_cast<long>(rep.drops);
            for (const auto& s : rep.successes)
                delay_sum += static_cast<double>(s.delay);
            if (prediction) {
                abs_err += std::abs(*prediction - static_cast<double>(rep.true_backlog));
                ++predicted_frames;
            }
            if (options.keep_frames) {
                const Observation& o = rep.observation;
                out.frames.push_back({trial, ep, f, o.action, o.idle, o.success, o.collision, rep.new_arrivals,
                                      rep.true_backlog, prediction, opt->label(), rep.drops, rep.transmissions});
            }
        }
        opt->end_episode();
        m.access_success_prob =
            m.arrivals > 0 ? static_cast<double>(m.successes) / static_cast<double>(m.arrivals) : 1.0;
        m.mean_delay = m.successes > 0 ? delay_sum / static_cast<double>(m.successes) : 0.0;
        if (predicted_frames > 0)
            m.pred_mae = abs_err / predicted_frames;
        out.episodes.push_back(m);
    }
    out.checkpoint = opt->checkpoint();
    if (options.inspect)
        options.inspect(trial, *opt);
    return out;
}

ExperimentResult run_experiment(const ExperimentConfig& c, const RunOptions& options) {
    validate(c);
    ExperimentResult result{c, std::vector<TrialResult>(static_cast<std::size_t>(c.trials))};
    unsigned workers = c.threads > 0 ? static_cast<unsigned>(c.threads) : std::thread::hardware_concurrency();
    workers = std::clamp(workers, 1u, static_cast<unsigned>(c.trials));

    // The DNN corrector is read-only during a run, so one copy serves every trial.
    RunOptions shared = options;
    if (!shared.corrector && c.corrector_checkpoint && effective_label_source(c) == control::LabelSource::DNN &&
        (c.optimizer == OptimizerKind::CPCL || c.optimizer == OptimizerKind::SL_formula))
        shared.corrector = load_corrector(c, *c.corrector_checkpoint);
    if (!shared.checkpoint && c.checkpoint)
        shared.checkpoint = nn::read_checkpoint(*c.checkpoint);

    std::atomic<int> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto work = [&] {
        for (int t = next++; t < c.trials; t = next++) {
            try {
                result.trials[static_cast<std::size_t>(t)] = run_trial(c, t, shared);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure)
                    failure = std::current_exception();
                next = c.trials;
            }
        }
    };
    if (workers == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (unsigned k = 0; k < workers; ++k)
            pool.emplace_back(work);
        for (auto& th : pool)
            th.join();
    }
    if (failure)
        std::rethrow_exception(failure);
    return result;
}

namespace {

std::string opt_field(const std::optional<double>& v) { return v ? fmt::format("{}", *v) : std::string(); }

}  // namespace

void write_frame_csv(std::ostream& out, const ExperimentResult& result) {
    const auto scheme = to_string(result.config.scheme);
    const auto optimizer = to_string(result.config.optimizer);
    out << kFrameCsvHeader << '\n';
    fmt::memory_buffer buf;
    for (const auto& trial : result.trials) {
        for (const auto& r : trial.frames) {
            buf.clear();
            fmt::format_to(std::back_inserter(buf), "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n", r.trial,
                           r.episode, r.frame, scheme, optimizer, r.action.acb_factor, r.action.backoff_window,
                           r.action.num_channels, r.idle, r.success, r.collision, r.arrivals, r.true_backlog,
                           opt_field(r.predicted), opt_field(r.label), r.drops, r.transmissions, r.success);
            out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
        }
    }
}

void write_episode_csv(std::ostream& out, const ExperimentResult& result) {
    out << kEpisodeCsvHeader << '\n';
    for (const auto& trial : result.trials)
        for (const auto& m : trial.episodes)
            out << fmt::format("{},{},{},{},{},{},{},{}\n", m.trial, m.episode, m.successes, m.access_success_prob,
                               m.mean_delay, m.transmissions, m.drops, opt_field(m.pred_mae));
}

nlohmann::json summarize(const ExperimentResult& result) {
    using nlohmann::json;
    std::map<std::string, std::vector<double>> per_trial;
    for (const auto& trial : result.trials) {
        std::map<std::string, std::vector<double>> values;
        for (const auto& m : trial.episodes) {
            values["successes"].push_back(static_cast<double>(m.successes));
            values["access_success_prob"].push_back(m.access_success_prob);
            values["mean_delay"].push_back(m.mean_delay);
            values["transmissions"].push_back(static_cast<double>(m.transmissions));
            values["drops"].push_back(static_cast<double>(m.drops));
            if (m.pred_mae)
                values["pred_mae"].push_back(*m.pred_mae);
        }
        for (const auto& [k, v] : values)
            per_trial[k].push_back(stats::mean(v));
    }
    json metrics = json::object();
    for (const auto& [k, v] : per_trial)
        metrics[k] = {{"mean", stats::mean(v)}, {"sd_across_trials", stats::stddev(v)}, {"trials", v.size()}};
    return {{"scheme", to_string(result.config.scheme)},
            {"optimizer", to_string(result.config.optimizer)},
            {"seed", result.config.seed},
            {"trials", result.config.trials},
            {"episodes", result.config.episodes},
            {"episode_length", result.config.episode_length},
            {"metrics", metrics}};
}

void write_outputs(const ExperimentResult& result, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    auto open = [&](const char* name) {
        std::ofstream f(dir / name, std::ios::binary);
        if (!f)
            throw std::runtime_error("cannot write " + (dir / name).string());
        return f;
    };
    if (result.config.write_frames) {
        auto f = open("frames.csv");
        write_frame_csv(f, result);
    }
    {
        auto f = open("episodes.csv");
        write_episode_csv(f, result);
    }
    {
        auto f = open("summary.json");
        f << summarize(result).dump(2) << '\n';
    }
    {
        auto f = open("config.json");
        f << config_to_json(result.config).dump(2) << '\n';
    }
    for (std::size_t t = 0; t < result.trials.size(); ++t)
        if (!result.trials[t].checkpoint.empty())
            nn::write_checkpoint(dir / fmt::format("checkpoint_trial{}.rachnn", t), result.trials[t].checkpoint);
}

std::vector<EpisodeCsvRow> read_episode_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != kEpisodeCsvHeader)
        throw std::invalid_argument("episode CSV: missing or unexpected header");
    std::vector<EpisodeCsvRow> rows;
    while (std::getline(in, line)) {
        if (line.empty())
            continue;
        std::stringstream ss(line);
        std::string trial, episode, successes;
        if (!std::getline(ss, trial, ',') || !std::getline(ss, episode, ',') || !std::getline(ss, successes, ','))
            throw std::invalid_argument("episode CSV: malformed row \"" + line + "\"");
        rows.push_back({std::stoi(trial), std::stoi(episode), std::stod(successes)});
    }
    return rows;
}

std::vector<double> mean_curve(const std::vector<EpisodeCsvRow>& rows) {
    std::map<int, std::pair<double, int>> acc;
    for (const auto& r : rows) {
        auto& [sum, n] = acc[r.episode];
        sum += r.successes;
        ++n;
    }
    std::vector<double> curve;
    int expected = 0;
    for (const auto& [ep, v] : acc) {
        if (ep != expected++)
            throw std::invalid_argument("episode CSV: episodes are not contiguous from 0");
        curve.push_back(v.first / v.second);
    }
    return curve;
}

std::vector<double> mean_curve(const ExperimentResult& result) {
    std::vector<EpisodeCsvRow> rows;
    for (const auto& t : result.trials)
        for (const auto& m : t.episodes)
            rows.push_back({m.trial, m.episode, static_cast<double>(m.successes)});
    return mean_curve(rows);
}

void check_comparable(const std::vector<ExperimentConfig>& configs) {
    if (configs.size() < 2)
        throw ConfigError("configs", "compare needs at least two configurations");
    const auto& first = configs.front();
    for (const auto& c : configs) {
        if (c.scheme != first.scheme)
            throw ConfigError("scheme", "compared configurations must share the scheme");
        if (!(c.traffic == first.traffic))
            throw ConfigError("traffic", "compared configurations must share the traffic profile");
        if (c.seed != first.seed)
            throw ConfigError("seed", "compared configurations must share the seed");
        if (c.trials != first.trials || c.episodes != first.episodes || c.episode_length != first.episode_length)
            throw ConfigError("trials", "compared configurations must share trials, episodes and episode_length");
        if (c.channels != first.channels || c.retransmission_limit != first.retransmission_limit)
            throw ConfigError("channels", "compared configurations must share channels and retransmission_limit");
    }
}

Comparison compare(const std::vector<ExperimentResult>& results, const ComparisonOptions& options) {
    std::vector<ExperimentConfig> configs;
    for (const auto& r : results)
        configs.push_back(r.config);
    check_comparable(configs);

    Comparison cmp;
    std::vector<std::vector<double>> samples;
    for (const auto& r : results) {
        cmp.names.emplace_back(to_string(r.config.optimizer));
        std::vector<double> s;
        for (const auto& t : r.trials) {
            if (options.unit == PairUnit::episode) {
                for (const auto& m : t.episodes)
                    s.push_back(static_cast<double>(m.successes));
            } else {
                const std::size_t n = t.episodes.size();
                const std::size_t k = options.last_episodes > 0
                                          ? std::min(n, static_cast<std::size_t>(options.last_episodes))
                                          : n;
                double sum = 0.0;
                for (std::size_t e = n - k; e < n; ++e)
                    sum += static_cast<double>(t.episodes[e].successes);
                s.push_back(sum / static_cast<double>(k));
            }
        }
        cmp.means.push_back(stats::mean(s));
        samples.push_back(std::move(s));
    }
    for (std::size_t a = 0; a < samples.size(); ++a)
        for (std::size_t b = a + 1; b < samples.size(); ++b)
            cmp.pairs.push_back({a, b, stats::paired(samples[a], samples[b])});
    return cmp;
}

nlohmann::json to_json(const Comparison& cmp) {
    using nlohmann::json;
    json out = {{"optimizers", cmp.names}, {"mean_successes", cmp.means}, {"pairs", json::array()}};
    for (const auto& p : cmp.pairs) {
        const auto& s = p.summary;
        out["pairs"].push_back({{"a", cmp.names[p.a]},
                                {"b", cmp.names[p.b]},
                                {"n", s.n},
                                {"mean_a", s.mean_a},
                                {"mean_b", s.mean_b},
                                {"mean_diff", s.mean_diff},
                                {"sd_diff", s.sd_diff},
                                {"ci95_low", s.ci_low},
                                {"ci95_high", s.ci_high},
                                {"lower_bound95", s.lower_bound}});
    }
    return out;
}

void write_comparison_csv(std::ostream& out, const Comparison& cmp) {
    out << "a,b,n,mean_a,mean_b,mean_diff,sd_diff,ci95_low,ci95_high,lower_bound95\n";
    for (const auto& p : cmp.pairs) {
        const auto& s = p.summary;
        out << fmt::format("{},{},{},{},{},{},{},{},{},{}\n", cmp.names[p.a], cmp.names[p.b], s.n, s.mean_a, s.mean_b,
                           s.mean_diff, s.sd_diff, s.ci_low, s.ci_high, s.lower_bound);
    }
}

}  // namespace rach
