#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <ostream>
#include <vector>

#include "rach/estimators.hpp"
#include "rach/neural.hpp"
#include "rach/rng.hpp"
#include "rach/sim.hpp"

namespace rach::control {

using estimators::BacklogEstimate;

enum class Scheme { ACB, ACB_BO, DRA };

// Discrete levels the learning controllers choose from.
struct ActionGrid {
    std::vector<double> acb_levels;   // strictly increasing, in (0, 1]
    std::vector<int> bo_levels;       // strictly increasing, >= 0
    std::vector<int> channel_levels;  // strictly increasing, >= 1; used by DRA

    // 16 ACB levels k/16, BO windows {0, 2, 4, 8, 16, 32}, channel levels
    // {6, 12, ..., 54}.
    static ActionGrid defaults();
    void validate() const;
    int max_backoff() const { return bo_levels.empty() ? 0 : bo_levels.back(); }

    bool operator==(const ActionGrid&) const = default;
};

// p = min(1, R / max(N-hat, 1)); window and channel count come from `base`.
ControlAction formula_acb(const BacklogEstimate& estimate, const ControlAction& base);
ControlAction genie_acb(std::size_t true_backlog, const ControlAction& base);

struct Transition {
    nn::Vector state;
    int action = 0;
    double reward = 0.0;
    nn::Vector next_state;
    bool terminal = false;
};

// Q-table keyed by a discretised state; unseen states read as all zeros.
class TabularQ {
public:
    explicit TabularQ(int num_actions);

    // Q(s,a) += alpha * (r + gamma * max_a' Q(s',a') - Q(s,a)); the bootstrap
    // term is dropped for terminal transitions.
    void update(int state, int action, double reward, int next_state, bool terminal, double alpha, double gamma);

    double value(int state, int action) const;
    double max_value(int state) const;
    int greedy(int state) const;
    int num_actions() const { return num_actions_; }
    const std::map<int, std::vector<double>>& table() const { return table_; }

    // CSV with header state_bucket,action,value; rows ordered by state then action.
    void dump_csv(std::ostream& out) const;

private:
    std::vector<double>& row(int state);

    int num_actions_;
    std::map<int, std::vector<double>> table_;
};

class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity);

    void push(Transition t);
    std::size_t size() const { return items_.size(); }
    std::size_t capacity() const { return capacity_; }
    const Transition& operator[](std::size_t i) const { return items_[i]; }
    // Uniform with replacement.
    std::vector<std::size_t> sample(std::size_t batch, RngStream& rng) const;

private:
    std::size_t capacity_;
    std::size_t next_ = 0;
    std::vector<Transition> items_;
};

// Index of the largest element; ties go to the lowest index.
int argmax(const nn::Vector& values);

double bellman_target(double reward, double gamma, double max_next_q, bool terminal);

// Epsilon-greedy over the network's Q-vector. The exploration coin is always
// drawn; a second draw picks the random action.
int dqn_select_action(const nn::Mlp& net, const nn::Vector& state, double epsilon, RngStream& rng);

struct DqnConfig {
    std::vector<int> hidden{64, 64};
    double gamma = 0.9;
    int batch = 32;
    int target_refresh = 100;
    std::size_t capacity = 10000;
    nn::Loss loss = nn::Loss::huber;
    nn::AdamConfig adam;
};

class DqnAgent {
public:
    DqnAgent(int state_dim, int num_actions, DqnConfig config, RngStream& init);
    DqnAgent(DqnConfig config, nn::Mlp net);

    int select(const nn::Vector& state, double epsilon, RngStream& rng) const;
    void remember(Transition t) { buffer_.push(std::move(t)); }

    // One Adam step on the Bellman regression loss for a sampled batch.
    // Returns nullopt (and leaves the network untouched) while the buffer
    // holds fewer than `batch` transitions.
    std::optional<double> train_step(RngStream& rng);

    const nn::Mlp& online() const { return online_; }
    nn::Mlp& online() { return online_; }
    const nn::Mlp& target() const { return target_; }
    void sync_target() { target_ = online_; }
    const ReplayBuffer& buffer() const { return buffer_; }
    const DqnConfig& config() const { return config_; }
    long train_steps() const { return train_steps_; }

private:
    DqnConfig config_;
    nn::Mlp online_;
    nn::Mlp target_;
    ReplayBuffer buffer_;
    nn::AdamState adam_;
    long train_steps_ = 0;
};

// Multiplicative decay toward a floor, advanced once per decision.
class EpsilonSchedule {
public:
    EpsilonSchedule(double start = 1.0, double floor = 0.05, double decay = 0.999);

    double value() const { return value_; }
    void advance() { value_ = std::max(floor_, value_ * decay_); }
    void set(double v) { value_ = std::max(floor_, v); }
    double floor() const { return floor_; }

private:
    double value_;
    double floor_;
    double decay_;
};

enum class ActionVariable { acb, backoff, channels };

std::vector<ActionVariable> controlled_variables(Scheme scheme);

// One DQN per action variable sharing the state and the reward. With
// `joint`, a single agent covers the product of all variable grids instead.
class CooperativeAgents {
public:
    CooperativeAgents(std::vector<ActionVariable> variables, const ActionGrid& grid, int state_dim, DqnConfig config,
                      RngStream& init, bool joint = false);
    CooperativeAgents(std::vector<ActionVariable> variables, const ActionGrid& grid, DqnConfig config,
                      std::vector<nn::Mlp> nets, bool joint = false);

    // Grid index per variable.
    std::vector<int> select(const nn::Vector& state, double epsilon, RngStream& rng) const;
    ControlAction to_action(const std::vector<int>& choice, const ControlAction& base) const;
    void remember(const nn::Vector& state, const std::vector<int>& choice, double reward, const nn::Vector& next_state,
                  bool terminal);
    void train_step(RngStream& rng);

    const std::vector<ActionVariable>& variables() const { return variables_; }
    std::vector<DqnAgent>& agents() { return agents_; }
    const std::vector<DqnAgent>& agents() const { return agents_; }
    bool joint() const { return joint_; }
    int state_dim() const { return agents_.front().online().inputs(); }

private:
    std::size_t levels(ActionVariable v) const;

    std::vector<ActionVariable> variables_;
    ActionGrid grid_;
    bool joint_;
    std::vector<DqnAgent> agents_;
};

ControlAction cooperative_select(const CooperativeAgents& agents, const nn::Vector& state, double epsilon,
                                 RngStream& rng, const ControlAction& base);

}  // namespace rach::control
