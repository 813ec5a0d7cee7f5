#include "rach/optimizers.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include <fmt/core.h>

namespace rach::control {

void Optimizer::load_checkpoint(const std::vector<nn::LayerRecord>& records) {
    if (!records.empty())
        throw std::invalid_argument("optimizer " + std::string(name()) + " has no trainable parameters");
}

ControlAction rule_action(double backlog, const ControlSettings& settings) {
    ControlAction a = settings.base;
    if (settings.scheme == Scheme::DRA) {
        a.acb_factor = 1.0;
        const auto& levels = settings.grid.channel_levels;
        if (levels.empty())
            return a;
        a.num_channels = levels.back();
        for (int level : levels) {
            if (level >= backlog) {
                a.num_channels = level;
                break;
            }
        }
        return a;
    }
    return formula_acb({std::max(0.0, backlog), estimators::EstimateSource::genie, false}, a);
}

ControlAction GenieOptimizer::decide(const FrameContext& ctx) {
    if (!ctx.true_backlog)
        throw std::logic_error("genie optimizer requires the true backlog");
    prediction_ = static_cast<double>(*ctx.true_backlog);
    return rule_action(*prediction_, settings_);
}

estimators::BacklogEstimate estimate_backlog(EstimatorKind kind, const Observation& obs, int search_max) {
    switch (kind) {
    case EstimatorKind::MoM_idle: return estimators::mom_closed_form(obs);
    case EstimatorKind::MoM_full: return estimators::mom_full(obs, search_max);
    case EstimatorKind::MLE: return estimators::mle_estimate(obs, search_max);
    case EstimatorKind::DA: break;
    }
    throw std::invalid_argument("estimate_backlog: DA is stateful, use da_update");
}

EstimatorOptimizer::EstimatorOptimizer(ControlSettings settings, EstimatorSettings estimator)
    : settings_(std::move(settings)), estimator_(estimator), da_(estimator.da) {}

std::string_view EstimatorOptimizer::name() const {
    switch (estimator_.kind) {
    case EstimatorKind::DA: return "DA";
    case EstimatorKind::MoM_idle: return "MoM_idle";
    case EstimatorKind::MoM_full: return "MoM_full";
    case EstimatorKind::MLE: return "MLE";
    }
    return "estimator";
}

void EstimatorOptimizer::begin_episode() {
    da_ = estimator_.da;
    estimate_ = da_.estimate;
    prediction_.reset();
    label_.reset();
}

ControlAction EstimatorOptimizer::decide(const FrameContext&) {
    prediction_ = estimate_;
    return rule_action(estimate_, settings_);
}

void EstimatorOptimizer::observe(const Observation& obs) {
    if (estimator_.kind == EstimatorKind::DA) {
        da_ = estimators::da_update(da_, obs);
        estimate_ = da_.estimate;
    } else {
        estimate_ = estimate_backlog(estimator_.kind, obs, estimator_.search_max).value;
    }
    estimate_ = std::min(estimate_, settings_.backlog_cap);
    label_ = estimate_;
}

AgentDriver::AgentDriver(CooperativeAgents agents, const AgentSettings& settings, std::uint64_t seed,
                         double reward_scale)
    : agents_(std::move(agents)),
      schedule_(settings.epsilon_start, settings.epsilon_floor, settings.epsilon_decay),
      explore_(seed, streams::exploration),
      replay_(seed, streams::replay),
      reward_scale_(reward_scale) {
    if (!(reward_scale > 0.0))
        throw std::invalid_argument("AgentDriver: reward scale must be positive");
}

void AgentDriver::store(const nn::Vector& next_state, bool terminal) {
    agents_.remember(pending_state_, pending_choice_, pending_reward_, next_state, terminal);
    ++transitions_;
}

ControlAction AgentDriver::act(const nn::Vector& state, const ControlAction& base) {
    if (learning_ && pending_ && rewarded_) {
        store(state, false);
        agents_.train_step(replay_);
    }
    last_choice_ = agents_.select(state, epsilon(), explore_);
    if (learning_)
        schedule_.advance();
    pending_ = true;
    rewarded_ = false;
    pending_state_ = state;
    pending_choice_ = last_choice_;
    return agents_.to_action(last_choice_, base);
}

void AgentDriver::reward(double successes) {
    if (!pending_)
        return;
    pending_reward_ = successes / reward_scale_;
    rewarded_ = true;
}

void AgentDriver::finish_episode() {
    if (learning_ && pending_ && rewarded_) {
        store(pending_state_, true);
        agents_.train_step(replay_);
    }
    pending_ = false;
    rewarded_ = false;
}

std::vector<nn::LayerRecord> agent_records(const CooperativeAgents& agents) {
    std::vector<nn::LayerRecord> out;
    for (const auto& agent : agents.agents()) {
        auto r = nn::to_records(agent.online());
        out.insert(out.end(), r.begin(), r.end());
    }
    return out;
}

std::vector<nn::Mlp> agent_networks(const std::vector<nn::LayerRecord>& records, std::size_t first,
                                    std::size_t agents, std::size_t layers_per_agent) {
    if (records.size() != first + agents * layers_per_agent)
        throw std::invalid_argument("checkpoint has " + std::to_string(records.size()) + " layers, expected " +
                                    std::to_string(first + agents * layers_per_agent));
    std::vector<nn::Mlp> nets;
    for (std::size_t k = 0; k < agents; ++k)
        nets.push_back(nn::mlp_from_records(records, first + k * layers_per_agent, layers_per_agent));
    return nets;
}

namespace {

CooperativeAgents make_agents(const ControlSettings& settings, const AgentSettings& agents, int state_dim,
                              RngStream& init) {
    return CooperativeAgents(controlled_variables(settings.scheme), settings.grid, state_dim, agents.dqn, init,
                             agents.joint);
}

CooperativeAgents agents_from(const ControlSettings& settings, const AgentSettings& agents,
                              const std::vector<nn::LayerRecord>& records, std::size_t first) {
    const std::size_t count = agents.joint ? 1 : controlled_variables(settings.scheme).size();
    return CooperativeAgents(controlled_variables(settings.scheme), settings.grid, agents.dqn,
                             agent_networks(records, first, count, agents.dqn.hidden.size() + 1), agents.joint);
}

RngStream init_stream(std::uint64_t seed) { return RngStream(seed, streams::init); }

}  // namespace

DqnOptimizer::DqnOptimizer(ControlSettings settings, AgentSettings agents, int window, std::uint64_t seed)
    : settings_(std::move(settings)),
      agent_settings_(agents),
      window_(window, settings_.grid.max_backoff()),
      driver_([&] {
          RngStream init = init_stream(seed);
          return make_agents(settings_, agent_settings_, predictor::kFeatureCount * window, init);
      }(),
              agent_settings_, seed, settings_.base.num_channels) {}

void DqnOptimizer::begin_episode() { window_.clear(); }

ControlAction DqnOptimizer::decide(const FrameContext&) { return driver_.act(window_.flattened(), settings_.base); }

void DqnOptimizer::observe(const Observation& obs) {
    window_.push(obs);
    driver_.reward(obs.success);
}

void DqnOptimizer::end_episode() { driver_.finish_episode(); }

std::vector<nn::LayerRecord> DqnOptimizer::checkpoint() const { return agent_records(driver_.agents()); }

void DqnOptimizer::load_checkpoint(const std::vector<nn::LayerRecord>& records) {
    driver_.agents() = agents_from(settings_, agent_settings_, records, 0);
}

TabularQOptimizer::TabularQOptimizer(ControlSettings settings, TabularSettings tabular, std::uint64_t seed)
    : settings_(std::move(settings)),
      tabular_(tabular),
      variables_(controlled_variables(settings_.scheme)),
      table_([&] {
          int n = 1;
          for (auto v : variables_) {
              switch (v) {
              case ActionVariable::acb: n *= static_cast<int>(settings_.grid.acb_levels.size()); break;
              case ActionVariable::backoff: n *= static_cast<int>(settings_.grid.bo_levels.size()); break;
              case ActionVariable::channels: n *= static_cast<int>(settings_.grid.channel_levels.size()); break;
              }
          }
          return n;
      }()),
      schedule_(tabular.epsilon_start, tabular.epsilon_floor, tabular.epsilon_decay),
      explore_(seed, streams::exploration) {
    if (!(tabular_.bucket_width > 0.0) || tabular_.buckets < 1)
        throw std::invalid_argument("TabularSettings: bucket width and count must be positive");
}

int TabularQOptimizer::bucket(double backlog) const {
    const int b = static_cast<int>(std::floor(std::max(0.0, backlog) / tabular_.bucket_width));
    return std::min(b, tabular_.buckets - 1);
}

ControlAction TabularQOptimizer::decode(int action) const {
    ControlAction a = settings_.base;
    for (std::size_t k = variables_.size(); k-- > 0;) {
        switch (variables_[k]) {
        case ActionVariable::acb: {
            const int n = static_cast<int>(settings_.grid.acb_levels.size());
            a.acb_factor = settings_.grid.acb_levels[static_cast<std::size_t>(action % n)];
            action /= n;
            break;
        }
        case ActionVariable::backoff: {
            const int n = static_cast<int>(settings_.grid.bo_levels.size());
            a.backoff_window = settings_.grid.bo_levels[static_cast<std::size_t>(action % n)];
            action /= n;
            break;
        }
        case ActionVariable::channels: {
            const int n = static_cast<int>(settings_.grid.channel_levels.size());
            a.num_channels = settings_.grid.channel_levels[static_cast<std::size_t>(action % n)];
            action /= n;
            break;
        }
        }
    }
    return a;
}

void TabularQOptimizer::begin_episode() {
    estimate_ = 0.0;
    label_.reset();
    pending_ = false;
}

ControlAction TabularQOptimizer::decide(const FrameContext&) {
    const int state = bucket(estimate_);
    if (learning_ && pending_)
        table_.update(pending_state_, pending_action_, pending_reward_, state, false, tabular_.alpha, tabular_.gamma);
    const double eps = learning_ ? schedule_.value() : fixed_epsilon_;
    const bool explore = explore_.uniform01() < eps;
    const int action = explore ? static_cast<int>(explore_.uniform_int(static_cast<std::uint64_t>(table_.num_actions())))
                               : table_.greedy(state);
    if (learning_)
        schedule_.advance();
    pending_ = true;
    pending_state_ = state;
    pending_action_ = action;
    pending_reward_ = 0.0;
    return decode(action);
}

void TabularQOptimizer::observe(const Observation& obs) {
    estimate_ = std::min(estimators::mom_full(obs, tabular_.search_max).value, settings_.backlog_cap);
    label_ = estimate_;
    pending_reward_ = obs.success;
}

void TabularQOptimizer::end_episode() {
    if (learning_ && pending_)
        table_.update(pending_state_, pending_action_, pending_reward_, pending_state_, true, tabular_.alpha,
                      tabular_.gamma);
    pending_ = false;
}

namespace {

LabelSource resolve_label_source(LabelSource wanted, const predictor::DnnCorrector* corrector) {
    if (wanted == LabelSource::DNN && corrector == nullptr) {
        fmt::print(stderr, "warning: no pretrained DNN corrector loaded; labelling with MoM_full\n");
        return LabelSource::MoM_full;
    }
    return wanted;
}

estimators::EstimateSource to_estimate_source(LabelSource s) {
    switch (s) {
    case LabelSource::MoM_idle: return estimators::EstimateSource::MoM_idle;
    case LabelSource::MoM_full: return estimators::EstimateSource::MoM_full;
    case LabelSource::MLE: return estimators::EstimateSource::MLE;
    case LabelSource::DNN: return estimators::EstimateSource::DNN;
    }
    return estimators::EstimateSource::MoM_full;
}

int agent_state_dim(const TwoStepSettings& s) {
    return 4 + (s.state_includes_observations ? predictor::kFeatureCount * s.predictor.window : 0);
}

}  // namespace

TwoStepOptimizer::TwoStepOptimizer(ControlSettings settings, TwoStepSettings two_step, std::uint64_t seed,
                                   std::shared_ptr<const predictor::DnnCorrector> corrector)
    : settings_(std::move(settings)),
      two_step_(std::move(two_step)),
      label_source_(resolve_label_source(two_step_.label_source, corrector.get())),
      corrector_(std::move(corrector)),
      predictor_([&] {
          RngStream init = init_stream(seed);
          return predictor::LstmPredictor(two_step_.predictor, init);
      }()),
      window_(two_step_.predictor.window, settings_.grid.max_backoff()),
      replay_(seed, streams::predictor_replay) {
    if (two_step_.agents) {
        // Agents draw their initial weights after the predictor's.
        RngStream init = init_stream(seed);
        (void)predictor::LstmPredictor(two_step_.predictor, init);
        driver_.emplace(make_agents(settings_, *two_step_.agents, agent_state_dim(two_step_), init),
                        *two_step_.agents, seed, settings_.base.num_channels);
    }
    last_action_ = settings_.base;
}

void TwoStepOptimizer::begin_episode() {
    window_.clear();
    predictor_.clear_pending();
    pending_label_.reset();
    prediction_.reset();
    label_.reset();
    last_action_ = settings_.base;
}

nn::Vector TwoStepOptimizer::agent_state(double predicted) const {
    const int extra = two_step_.state_includes_observations ? predictor::kFeatureCount * window_.length() : 0;
    nn::Vector s(4 + extra);
    const int max_bo = settings_.grid.max_backoff();
    s[0] = predicted / two_step_.predictor.cap;
    s[1] = last_action_.acb_factor;
    s[2] = max_bo > 0 ? static_cast<double>(last_action_.backoff_window) / max_bo : 0.0;
    s[3] = static_cast<double>(last_action_.num_channels) / settings_.base.num_channels;
    if (extra > 0)
        s.tail(extra) = window_.flattened();
    return s;
}

void TwoStepOptimizer::consume_label() {
    if (!pending_label_)
        return;
    if (learning_)
        losses_.push_back(predictor_.online_update(*pending_label_, replay_));
    pending_label_.reset();
    ++labels_consumed_;
}

ControlAction TwoStepOptimizer::decide(const FrameContext& ctx) {
    consume_label();
    double predicted = predictor_.predict_at(ctx.frame, window_.matrix()).value;
    if (two_step_.genie_predictor) {
        if (!ctx.true_backlog)
            throw std::logic_error("genie predictor requires the true backlog");
        predicted = static_cast<double>(*ctx.true_backlog);
    }
    prediction_ = predicted;
    frame_ = ctx.frame;
    const ControlAction action =
        driver_ ? driver_->act(agent_state(predicted), settings_.base) : rule_action(predicted, settings_);
    last_action_ = action;
    return action;
}

void TwoStepOptimizer::observe(const Observation& obs) {
    window_.push(obs);
    double value = 0.0;
    switch (label_source_) {
    case LabelSource::DNN: value = corrector_->estimate(obs).value; break;
    case LabelSource::MoM_idle: value = estimators::mom_closed_form(obs).value; break;
    case LabelSource::MoM_full: value = estimators::mom_full(obs, two_step_.search_max).value; break;
    case LabelSource::MLE: value = estimators::mle_estimate(obs, two_step_.search_max).value; break;
    }
    value = std::min(value, two_step_.predictor.cap);
    label_ = value;
    pending_label_ = predictor::LabelRecord{frame_, prediction_.value_or(0.0), value, to_estimate_source(label_source_)};
    ++labels_created_;
    if (driver_)
        driver_->reward(obs.success);
}

void TwoStepOptimizer::end_episode() {
    consume_label();
    if (driver_)
        driver_->finish_episode();
}

std::vector<nn::LayerRecord> TwoStepOptimizer::checkpoint() const {
    auto out = nn::to_records(predictor_.network());
    if (driver_) {
        auto a = agent_records(driver_->agents());
        out.insert(out.end(), a.begin(), a.end());
    }
    return out;
}

void TwoStepOptimizer::load_checkpoint(const std::vector<nn::LayerRecord>& records) {
    if (records.size() < 2)
        throw std::invalid_argument("TwoStepOptimizer checkpoint needs the LSTM and its head");
    predictor_ = predictor::LstmPredictor(two_step_.predictor, nn::lstm_regressor_from_records(records, 0));
    if (driver_ && records.size() > 2)
        driver_->agents() = agents_from(settings_, *two_step_.agents, records, 2);
    else if (records.size() > 2)
        throw std::invalid_argument("checkpoint holds agent layers but the optimizer uses the formula policy");
}

void TwoStepOptimizer::set_learning(bool on) {
    learning_ = on;
    if (driver_)
        driver_->set_learning(on);
}

void TwoStepOptimizer::set_exploration(double eps) {
    if (driver_)
        driver_->set_exploration(eps);
}

}  // namespace rach::control
