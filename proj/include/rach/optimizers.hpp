#pragma once

#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rach/checkpoint.hpp"
#include "rach/control.hpp"
#include "rach/estimators.hpp"
#include "rach/predictor.hpp"

namespace rach::control {

// What a controller is told at the start of frame t. The true backlog is
// filled in only for controllers that declare needs_ground_truth().
struct FrameContext {
    FrameIndex frame = 0;
    std::optional<std::size_t> true_backlog;
};

// Per-frame controller. The runner calls, for every frame:
//   decide(ctx) -> action, then observe(O^t)
// and brackets each episode with begin_episode()/end_episode().
class Optimizer {
public:
    virtual ~Optimizer() = default;

    virtual std::string_view name() const = 0;
    virtual bool needs_ground_truth() const { return false; }
    virtual void begin_episode() {}
    virtual ControlAction decide(const FrameContext& ctx) = 0;
    virtual void observe(const Observation& obs) = 0;
    virtual void end_episode() {}

    // Backlog prediction used for the frame just decided, if any.
    virtual std::optional<double> prediction() const { return std::nullopt; }
    // Approximate label derived from the frame just observed, if any.
    virtual std::optional<double> label() const { return std::nullopt; }

    virtual std::vector<nn::LayerRecord> checkpoint() const { return {}; }
    virtual void load_checkpoint(const std::vector<nn::LayerRecord>& records);

    // Learning off freezes every parameter and uses the fixed exploration rate.
    virtual void set_learning(bool) {}
    virtual void set_exploration(double) {}
};

struct ControlSettings {
    Scheme scheme = Scheme::ACB;
    ControlAction base;  // values for the variables the scheme does not control
    ActionGrid grid = ActionGrid::defaults();
    double backlog_cap = 540.0;
};

// Rule-based configuration from a backlog estimate: the ACB formula for ACB
// and ACB_BO (window from `base`), and for DRA the smallest channel level
// covering the estimate with p = 1.
ControlAction rule_action(double backlog, const ControlSettings& settings);

class GenieOptimizer final : public Optimizer {
public:
    explicit GenieOptimizer(ControlSettings settings) : settings_(std::move(settings)) {}

    std::string_view name() const override { return "genie"; }
    bool needs_ground_truth() const override { return true; }
    ControlAction decide(const FrameContext& ctx) override;
    void observe(const Observation&) override {}
    std::optional<double> prediction() const override { return prediction_; }

private:
    ControlSettings settings_;
    std::optional<double> prediction_;
};

enum class EstimatorKind { DA, MoM_idle, MoM_full, MLE };

struct EstimatorSettings {
    EstimatorKind kind = EstimatorKind::MoM_full;
    int search_max = 540;
    estimators::DAState da;
};

// Non-learning controller: the estimate of frame t's backlog configures
// frame t + 1.
class EstimatorOptimizer final : public Optimizer {
public:
    EstimatorOptimizer(ControlSettings settings, EstimatorSettings estimator);

    std::string_view name() const override;
    void begin_episode() override;
    ControlAction decide(const FrameContext& ctx) override;
    void observe(const Observation& obs) override;
    std::optional<double> prediction() const override { return prediction_; }
    std::optional<double> label() const override { return label_; }

private:
    ControlSettings settings_;
    EstimatorSettings estimator_;
    estimators::DAState da_;
    double estimate_ = 0.0;
    std::optional<double> prediction_;
    std::optional<double> label_;
};

estimators::BacklogEstimate estimate_backlog(EstimatorKind kind, const Observation& obs, int search_max);

struct AgentSettings {
    DqnConfig dqn;
    double epsilon_start = 1.0;
    double epsilon_floor = 0.05;
    double epsilon_decay = 0.999;
    bool joint = false;
};

// Couples cooperative agents to the frame loop: the transition for frame t
// is completed when the state for t + 1 is known, or marked terminal at the
// end of an episode. Rewards are successes / reward_scale.
class AgentDriver {
public:
    AgentDriver(CooperativeAgents agents, const AgentSettings& settings, std::uint64_t seed, double reward_scale);

    ControlAction act(const nn::Vector& state, const ControlAction& base);
    void reward(double successes);
    void finish_episode();

    void set_learning(bool on) { learning_ = on; }
    void set_exploration(double eps) { fixed_epsilon_ = eps; }
    double epsilon() const { return learning_ ? schedule_.value() : fixed_epsilon_; }
    const std::vector<int>& last_choice() const { return last_choice_; }
    CooperativeAgents& agents() { return agents_; }
    const CooperativeAgents& agents() const { return agents_; }
    long transitions() const { return transitions_; }

private:
    void store(const nn::Vector& next_state, bool terminal);

    CooperativeAgents agents_;
    EpsilonSchedule schedule_;
    RngStream explore_;
    RngStream replay_;
    double reward_scale_;
    bool learning_ = true;
    double fixed_epsilon_ = 0.0;
    bool pending_ = false;
    bool rewarded_ = false;
    nn::Vector pending_state_;
    std::vector<int> pending_choice_;
    double pending_reward_ = 0.0;
    std::vector<int> last_choice_;
    long transitions_ = 0;
};

std::vector<nn::LayerRecord> agent_records(const CooperativeAgents& agents);
std::vector<nn::Mlp> agent_networks(const std::vector<nn::LayerRecord>& records, std::size_t first,
                                    std::size_t agents, std::size_t layers_per_agent);

// One-step DQN: the state is the flattened window of the last T_o frames.
class DqnOptimizer final : public Optimizer {
public:
    DqnOptimizer(ControlSettings settings, AgentSettings agents, int window, std::uint64_t seed);

    std::string_view name() const override { return "DQN"; }
    void begin_episode() override;
    ControlAction decide(const FrameContext& ctx) override;
    void observe(const Observation& obs) override;
    void end_episode() override;
    std::vector<nn::LayerRecord> checkpoint() const override;
    void load_checkpoint(const std::vector<nn::LayerRecord>& records) override;
    void set_learning(bool on) override { driver_.set_learning(on); }
    void set_exploration(double eps) override { driver_.set_exploration(eps); }

    AgentDriver& driver() { return driver_; }

private:
    ControlSettings settings_;
    AgentSettings agent_settings_;
    predictor::ObservationWindow window_;
    AgentDriver driver_;
};

struct TabularSettings {
    double alpha = 0.1;
    double gamma = 0.9;
    double bucket_width = 13.5; // devices per state bucket
    int buckets = 40;
    double epsilon_start = 1.0;
    double epsilon_floor = 0.05;
    double epsilon_decay = 0.999;
    int search_max = 540;
};

// Tabular Q-learning over MoM-full backlog buckets and the joint action grid.
class TabularQOptimizer final : public Optimizer {
public:
    TabularQOptimizer(ControlSettings settings, TabularSettings tabular, std::uint64_t seed);

    std::string_view name() const override { return "tabularQ"; }
    void begin_episode() override;
    ControlAction decide(const FrameContext& ctx) override;
    void observe(const Observation& obs) override;
    void end_episode() override;
    std::optional<double> label() const override { return label_; }
    void set_learning(bool on) override { learning_ = on; }
    void set_exploration(double eps) override { fixed_epsilon_ = eps; }

    const TabularQ& table() const { return table_; }
    int bucket(double backlog) const;

private:
    ControlAction decode(int action) const;

    ControlSettings settings_;
    TabularSettings tabular_;
    std::vector<ActionVariable> variables_;
    TabularQ table_;
    EpsilonSchedule schedule_;
    RngStream explore_;
    bool learning_ = true;
    double fixed_epsilon_ = 0.0;
    double estimate_ = 0.0;
    std::optional<double> label_;
    bool pending_ = false;
    int pending_state_ = 0;
    int pending_action_ = 0;
    double pending_reward_ = 0.0;
};

enum class LabelSource { MoM_idle, MoM_full, MLE, DNN };

struct TwoStepSettings {
    predictor::PredictorConfig predictor;
    LabelSource label_source = LabelSource::MoM_full;
    int search_max = 540;
    // Learned policy (CPCL) when set; otherwise the rule_action formula.
    std::optional<AgentSettings> agents;
    // Append the raw observation window to the agents' state.
    bool state_includes_observations = false;
    // Test hook: use the true backlog instead of the LSTM prediction.
    bool genie_predictor = false;
};

// Prediction followed by configuration. Per frame t:
//   1. the LSTM predicts N^t from O^{t-T_o} .. O^{t-1};
//   2. the policy maps N^t (and the previous action) to the action for t;
//   3. once O^t is observed, the labeler produces N-hat^t;
//   4. the label record for t is consumed by one online update before the
//      next prediction.
// With a formula policy and MoM labels this is the SL optimizer; with agents
// and DNN labels it is CPCL.
class TwoStepOptimizer final : public Optimizer {
public:
    TwoStepOptimizer(ControlSettings settings, TwoStepSettings two_step, std::uint64_t seed,
                     std::shared_ptr<const predictor::DnnCorrector> corrector = nullptr);

    std::string_view name() const override { return two_step_.agents ? "CPCL" : "SL_formula"; }
    bool needs_ground_truth() const override { return two_step_.genie_predictor; }
    void begin_episode() override;
    ControlAction decide(const FrameContext& ctx) override;
    void observe(const Observation& obs) override;
    void end_episode() override;
    std::optional<double> prediction() const override { return prediction_; }
    std::optional<double> label() const override { return label_; }
    std::vector<nn::LayerRecord> checkpoint() const override;
    void load_checkpoint(const std::vector<nn::LayerRecord>& records) override;
    void set_learning(bool on) override;
    void set_exploration(double eps) override;

    LabelSource effective_label_source() const { return label_source_; }
    long labels_created() const { return labels_created_; }
    long labels_consumed() const { return labels_consumed_; }
    // Mean squared prediction error (devices^2) reported by online updates.
    const std::vector<double>& update_losses() const { return losses_; }
    predictor::LstmPredictor& lstm() { return predictor_; }
    AgentDriver* driver() { return driver_ ? &*driver_ : nullptr; }

private:
    void consume_label();
    nn::Vector agent_state(double predicted) const;

    ControlSettings settings_;
    TwoStepSettings two_step_;
    LabelSource label_source_;
    std::shared_ptr<const predictor::DnnCorrector> corrector_;
    predictor::LstmPredictor predictor_;
    predictor::ObservationWindow window_;
    std::optional<AgentDriver> driver_;
    RngStream replay_;
    bool learning_ = true;

    FrameIndex frame_ = 0;
    ControlAction last_action_;
    std::optional<double> prediction_;
    std::optional<double> label_;
    std::optional<predictor::LabelRecord> pending_label_;
    long labels_created_ = 0;
    long labels_consumed_ = 0;
    std::vector<double> losses_;
};

}  // namespace rach::control
