#include "rach/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>

namespace rach {

using nlohmann::json;

std::string_view to_string(OptimizerKind kind) {
    switch (kind) {
    case OptimizerKind::genie: return "genie";
    case OptimizerKind::DA: return "DA";
    case OptimizerKind::MoM_idle: return "MoM_idle";
    case OptimizerKind::MoM_full: return "MoM_full";
    case OptimizerKind::MLE: return "MLE";
    case OptimizerKind::SL_formula: return "SL_formula";
    case OptimizerKind::tabularQ: return "tabularQ";
    case OptimizerKind::DQN: return "DQN";
    case OptimizerKind::CPCL: return "CPCL";
    }
    return "?";
}

std::string_view to_string(control::Scheme scheme) {
    switch (scheme) {
    case control::Scheme::ACB: return "ACB";
    case control::Scheme::ACB_BO: return "ACB_BO";
    case control::Scheme::DRA: return "DRA";
    }
    return "?";
}

std::string_view to_string(control::LabelSource source) {
    switch (source) {
    case control::LabelSource::MoM_idle: return "MoM_idle";
    case control::LabelSource::MoM_full: return "MoM_full";
    case control::LabelSource::MLE: return "MLE";
    case control::LabelSource::DNN: return "DNN";
    }
    return "?";
}

std::string_view to_string(TrafficKind kind) {
    switch (kind) {
    case TrafficKind::beta_periodic: return "beta_periodic";
    case TrafficKind::constant: return "constant";
    case TrafficKind::poisson: return "poisson";
    }
    return "?";
}

namespace {

template <class E, std::size_t N>
E parse_enum(const std::string& field, const std::string& text, const E (&values)[N]) {
    std::string options;
    for (E v : values) {
        if (to_string(v) == text)
            return v;
        options += (options.empty() ? "" : ", ") + std::string(to_string(v));
    }
    throw ConfigError(field, "unknown value \"" + text + "\" (expected one of " + options + ")");
}

constexpr OptimizerKind kOptimizers[] = {OptimizerKind::genie,    OptimizerKind::DA,         OptimizerKind::MoM_idle,
                                         OptimizerKind::MoM_full, OptimizerKind::MLE,        OptimizerKind::SL_formula,
                                         OptimizerKind::tabularQ, OptimizerKind::DQN,        OptimizerKind::CPCL};
constexpr control::Scheme kSchemes[] = {control::Scheme::ACB, control::Scheme::ACB_BO, control::Scheme::DRA};
constexpr control::LabelSource kLabels[] = {control::LabelSource::MoM_idle, control::LabelSource::MoM_full,
                                            control::LabelSource::MLE, control::LabelSource::DNN};
constexpr TrafficKind kTraffic[] = {TrafficKind::beta_periodic, TrafficKind::constant, TrafficKind::poisson};

// Reads one JSON object, rejecting keys it was not asked about.
class Section {
public:
    Section(const json& doc, std::string path) : doc_(doc), path_(std::move(path)) {
        if (!doc_.is_object())
            throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
    }

    std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
    bool has(const std::string& key) const { return doc_.contains(key); }

    template <class T>
    void get(const std::string& key, T& out) {
        seen_.insert(key);
        if (!doc_.contains(key))
            return;
        try {
            out = doc_.at(key).get<T>();
        } catch (const json::exception&) {
            throw ConfigError(field(key), "wrong type");
        }
    }

    template <class T>
    void get(const std::string& key, std::optional<T>& out) {
        seen_.insert(key);
        if (!doc_.contains(key) || doc_.at(key).is_null())
            return;
        T value{};
        get(key, value);
        out = value;
    }

    template <class E, std::size_t N>
    void get_enum(const std::string& key, E& out, const E (&values)[N]) {
        std::string text;
        get(key, text);
        if (doc_.contains(key))
            out = parse_enum(field(key), text, values);
    }

    Section child(const std::string& key) {
        seen_.insert(key);
        return Section(doc_.contains(key) ? doc_.at(key) : empty(), field(key));
    }

    void finish() const {
        for (const auto& item : doc_.items())
            if (!seen_.count(item.key()))
                throw ConfigError(field(item.key()), "unknown key");
    }

private:
    static const json& empty() {
        static const json e = json::object();
        return e;
    }

    const json& doc_;
    std::string path_;
    std::set<std::string> seen_;
};

void require(bool ok, const std::string& field, const std::string& message) {
    if (!ok)
        throw ConfigError(field, message);
}

}  // namespace

ExperimentConfig config_from_json(const json& doc) {
    ExperimentConfig c;
    Section root(doc, "");
    root.get_enum("scheme", c.scheme, kSchemes);
    root.get_enum("optimizer", c.optimizer, kOptimizers);
    root.get("channels", c.channels);
    root.get("retransmission_limit", c.retransmission_limit);
    root.get("episode_length", c.episode_length);
    root.get("episodes", c.episodes);
    root.get("seed", c.seed);
    root.get("trials", c.trials);
    root.get("threads", c.threads);
    root.get("write_frames", c.write_frames);
    root.get("backoff_window", c.backoff_window);
    root.get("backlog_cap", c.backlog_cap);
    root.get("da_drift", c.da_drift);
    root.get("learning", c.learning);
    root.get("eval_epsilon", c.eval_epsilon);
    root.get("checkpoint", c.checkpoint);
    root.get("corrector_checkpoint", c.corrector_checkpoint);

    {
        Section t = root.child("traffic");
        t.get_enum("kind", c.traffic.kind, kTraffic);
        t.get("total_per_period", c.traffic.total_per_period);
        t.get("period", c.traffic.period);
        t.get("alpha", c.traffic.alpha);
        t.get("beta", c.traffic.beta);
        t.get("deterministic", c.traffic.deterministic);
        t.finish();
    }
    {
        Section g = root.child("action_grid");
        // Each scheme accepts only the grids of the variables it controls.
        const auto vars = control::controlled_variables(c.scheme);
        auto controls = [&](control::ActionVariable v) { return std::find(vars.begin(), vars.end(), v) != vars.end(); };
        auto check = [&](const char* key, control::ActionVariable v) {
            if (g.has(key) && !controls(v))
                throw ConfigError(g.field(key), "not controlled under scheme " + std::string(to_string(c.scheme)));
        };
        check("acb_levels", control::ActionVariable::acb);
        check("bo_levels", control::ActionVariable::backoff);
        check("channel_levels", control::ActionVariable::channels);
        g.get("acb_levels", c.grid.acb_levels);
        g.get("bo_levels", c.grid.bo_levels);
        g.get("channel_levels", c.grid.channel_levels);
        g.finish();
    }
    {
        Section p = root.child("predictor");
        p.get("window", c.predictor.window);
        p.get("hidden", c.predictor.hidden);
        p.get("batch", c.predictor.batch);
        p.get("replay", c.predictor.replay);
        p.get("learning_rate", c.predictor.learning_rate);
        std::string label;
        p.get("label_source", label);
        if (!label.empty())
            c.predictor.label_source = parse_enum(p.field("label_source"), label, kLabels);
        p.finish();
    }
    {
        Section a = root.child("agent");
        a.get("hidden", c.agent.hidden);
        a.get("gamma", c.agent.gamma);
        a.get("batch", c.agent.batch);
        a.get("target_refresh", c.agent.target_refresh);
        a.get("buffer", c.agent.buffer);
        a.get("learning_rate", c.agent.learning_rate);
        a.get("epsilon_start", c.agent.epsilon_start);
        a.get("epsilon_floor", c.agent.epsilon_floor);
        a.get("epsilon_decay", c.agent.epsilon_decay);
        a.get("joint", c.agent.joint);
        a.get("state_includes_observations", c.agent.state_includes_observations);
        a.finish();
    }
    {
        Section q = root.child("tabular");
        q.get("alpha", c.tabular.alpha);
        q.get("bucket_width", c.tabular.bucket_width);
        q.get("buckets", c.tabular.buckets);
        q.finish();
    }
    {
        Section d = root.child("corrector");
        d.get("hidden", c.corrector.hidden);
        d.get("batch", c.corrector.batch);
        d.get("epochs", c.corrector.epochs);
        d.get("dataset_pairs", c.corrector.dataset_pairs);
        d.get("holdout_fraction", c.corrector.holdout_fraction);
        d.get("learning_rate", c.corrector.learning_rate);
        d.get("max_backlog", c.corrector.max_backlog);
        d.finish();
    }
    root.finish();
    validate(c);
    return c;
}

json config_to_json(const ExperimentConfig& c) {
    json grid = json::object();
    for (auto v : control::controlled_variables(c.scheme)) {
        switch (v) {
        case control::ActionVariable::acb: grid["acb_levels"] = c.grid.acb_levels; break;
        case control::ActionVariable::backoff: grid["bo_levels"] = c.grid.bo_levels; break;
        case control::ActionVariable::channels: grid["channel_levels"] = c.grid.channel_levels; break;
        }
    }
    json predictor = {{"window", c.predictor.window},
                      {"hidden", c.predictor.hidden},
                      {"batch", c.predictor.batch},
                      {"replay", c.predictor.replay},
                      {"learning_rate", c.predictor.learning_rate}};
    if (c.predictor.label_source)
        predictor["label_source"] = to_string(*c.predictor.label_source);
    json doc = {
        {"scheme", to_string(c.scheme)},
        {"optimizer", to_string(c.optimizer)},
        {"channels", c.channels},
        {"retransmission_limit", c.retransmission_limit},
        {"traffic",
         {{"kind", to_string(c.traffic.kind)},
          {"total_per_period", c.traffic.total_per_period},
          {"period", c.traffic.period},
          {"alpha", c.traffic.alpha},
          {"beta", c.traffic.beta},
          {"deterministic", c.traffic.deterministic}}},
        {"episode_length", c.episode_length},
        {"episodes", c.episodes},
        {"seed", c.seed},
        {"trials", c.trials},
        {"threads", c.threads},
        {"write_frames", c.write_frames},
        {"action_grid", grid},
        {"backoff_window", c.backoff_window},
        {"backlog_cap", c.backlog_cap},
        {"da_drift", c.da_drift},
        {"predictor", predictor},
        {"agent",
         {{"hidden", c.agent.hidden},
          {"gamma", c.agent.gamma},
          {"batch", c.agent.batch},
          {"target_refresh", c.agent.target_refresh},
          {"buffer", c.agent.buffer},
          {"learning_rate", c.agent.learning_rate},
          {"epsilon_start", c.agent.epsilon_start},
          {"epsilon_floor", c.agent.epsilon_floor},
          {"epsilon_decay", c.agent.epsilon_decay},
          {"joint", c.agent.joint},
          {"state_includes_observations", c.agent.state_includes_observations}}},
        {"tabular",
         {{"alpha", c.tabular.alpha}, {"bucket_width", c.tabular.bucket_width}, {"buckets", c.tabular.buckets}}},
        {"corrector",
         {{"hidden", c.corrector.hidden},
          {"batch", c.corrector.batch},
          {"epochs", c.corrector.epochs},
          {"dataset_pairs", c.corrector.dataset_pairs},
          {"holdout_fraction", c.corrector.holdout_fraction},
          {"learning_rate", c.corrector.learning_rate},
          {"max_backlog", c.corrector.max_backlog}}},
        {"learning", c.learning},
        {"eval_epsilon", c.eval_epsilon},
    };
    if (c.checkpoint)
        doc["checkpoint"] = *c.checkpoint;
    if (c.corrector_checkpoint)
        doc["corrector_checkpoint"] = *c.corrector_checkpoint;
    return doc;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw ConfigError("<file>", "cannot open " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("<file>", std::string("invalid JSON: ") + e.what());
    }
    return config_from_json(doc);
}

void validate(const ExperimentConfig& c) {
    require(c.channels >= 1, "channels", "must be at least 1");
    require(c.retransmission_limit >= 1, "retransmission_limit", "must be at least 1");
    require(c.episode_length >= 1, "episode_length", "must be at least 1");
    require(c.episodes >= 1, "episodes", "must be at least 1");
    require(c.trials >= 1, "trials", "must be at least 1");
    require(c.threads >= 0, "threads", "must be nonnegative");
    require(c.backlog_cap >= 1, "backlog_cap", "must be at least 1");
    require(c.da_drift > 0.0, "da_drift", "must be positive");
    require(c.eval_epsilon >= 0.0 && c.eval_epsilon <= 1.0, "eval_epsilon", "must lie in [0, 1]");
    try {
        validate(c.traffic);
    } catch (const std::invalid_argument& e) {
        throw ConfigError("traffic", e.what());
    }
    try {
        c.grid.validate();
    } catch (const std::invalid_argument& e) {
        const std::string msg = e.what();
        const auto space = msg.find(' ');
        throw ConfigError(msg.substr(0, space), msg.substr(space + 1));
    }
    require(c.backoff_window >= 0, "backoff_window", "must be nonnegative");
    require(c.scheme == control::Scheme::ACB_BO || c.backoff_window == 0, "backoff_window",
            "back-off control requires scheme ACB_BO");
    if (c.scheme == control::Scheme::DRA)
        require(c.grid.channel_levels.back() <= c.channels, "action_grid.channel_levels",
                "levels must not exceed channels");
    if (c.optimizer == OptimizerKind::MLE)
        require(c.channels <= estimators::kDefaultMleMaxChannels, "channels",
                "MLE supports at most " + std::to_string(estimators::kDefaultMleMaxChannels) + " channels");
    if (c.predictor.label_source == control::LabelSource::MLE)
        require(c.channels <= estimators::kDefaultMleMaxChannels, "predictor.label_source",
                "MLE labels support at most " + std::to_string(estimators::kDefaultMleMaxChannels) + " channels");

    require(c.predictor.window >= 1, "predictor.window", "must be at least 1");
    require(c.predictor.hidden >= 1, "predictor.hidden", "must be at least 1");
    require(c.predictor.batch >= 1, "predictor.batch", "must be at least 1");
    require(c.predictor.replay >= 1, "predictor.replay", "must be at least 1");
    require(c.predictor.learning_rate > 0.0, "predictor.learning_rate", "must be positive");

    require(!c.agent.hidden.empty(), "agent.hidden", "need at least one hidden layer");
    for (int h : c.agent.hidden)
        require(h >= 1, "agent.hidden", "layer sizes must be positive");
    require(c.agent.gamma >= 0.0 && c.agent.gamma < 1.0, "agent.gamma", "must lie in [0, 1)");
    require(c.agent.batch >= 1, "agent.batch", "must be at least 1");
    require(c.agent.target_refresh >= 1, "agent.target_refresh", "must be at least 1");
    require(c.agent.buffer >= static_cast<std::size_t>(c.agent.batch), "agent.buffer", "must hold one batch");
    require(c.agent.learning_rate > 0.0, "agent.learning_rate", "must be positive");
    require(c.agent.epsilon_start >= 0.0 && c.agent.epsilon_start <= 1.0, "agent.epsilon_start", "must lie in [0, 1]");
    require(c.agent.epsilon_floor >= 0.0 && c.agent.epsilon_floor <= c.agent.epsilon_start, "agent.epsilon_floor",
            "must lie in [0, epsilon_start]");
    require(c.agent.epsilon_decay > 0.0 && c.agent.epsilon_decay <= 1.0, "agent.epsilon_decay", "must lie in (0, 1]");

    require(c.tabular.alpha > 0.0 && c.tabular.alpha <= 1.0, "tabular.alpha", "must lie in (0, 1]");
    require(c.tabular.bucket_width > 0.0, "tabular.bucket_width", "must be positive");
    require(c.tabular.buckets >= 1, "tabular.buckets", "must be at least 1");

    require(!c.corrector.hidden.empty(), "corrector.hidden", "need at least one hidden layer");
    require(c.corrector.batch >= 1, "corrector.batch", "must be at least 1");
    require(c.corrector.epochs >= 1, "corrector.epochs", "must be at least 1");
    require(c.corrector.dataset_pairs >= 1, "corrector.dataset_pairs", "must be at least 1");
    require(c.corrector.holdout_fraction >= 0.0 && c.corrector.holdout_fraction < 1.0, "corrector.holdout_fraction",
            "must lie in [0, 1)");
    require(c.corrector.learning_rate > 0.0, "corrector.learning_rate", "must be positive");
    require(c.corrector.max_backlog > 0.0, "corrector.max_backlog", "must be positive");

    const bool learned = c.optimizer == OptimizerKind::SL_formula || c.optimizer == OptimizerKind::DQN ||
                         c.optimizer == OptimizerKind::CPCL;
    require(!c.checkpoint || learned, "checkpoint",
            "optimizer " + std::string(to_string(c.optimizer)) + " has no loadable parameters");
}

control::ControlSettings control_settings(const ExperimentConfig& c) {
    control::ControlSettings s;
    s.scheme = c.scheme;
    s.base = ControlAction{1.0, c.backoff_window, c.channels};
    s.grid = c.grid;
    s.backlog_cap = c.backlog_cap;
    return s;
}

predictor::CorrectorConfig corrector_config(const ExperimentConfig& c) {
    predictor::CorrectorConfig cc;
    cc.hidden = c.corrector.hidden;
    cc.scale = c.channels;
    cc.max_backoff = c.grid.max_backoff();
    cc.batch = c.corrector.batch;
    cc.adam.learning_rate = c.corrector.learning_rate;
    return cc;
}

control::LabelSource effective_label_source(const ExperimentConfig& c) {
    if (c.predictor.label_source)
        return *c.predictor.label_source;
    return c.optimizer == OptimizerKind::CPCL ? control::LabelSource::DNN : control::LabelSource::MoM_full;
}

}  // namespace rach
