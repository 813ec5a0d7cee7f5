#include "rach/control.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace rach::control {

ActionGrid ActionGrid::defaults() {
    ActionGrid g;
    for (int k = 1; k <= 16; ++k)
        g.acb_levels.push_back(k / 16.0);
    g.bo_levels = {0, 2, 4, 8, 16, 32};
    for (int r = 6; r <= 54; r += 6)
        g.channel_levels.push_back(r);
    return g;
}

namespace {

template <typename T>
void require_increasing(const std::vector<T>& v, const char* name) {
    if (v.empty())
        throw std::invalid_argument(std::string("action_grid.") + name + " must not be empty");
    for (std::size_t i = 1; i < v.size(); ++i)
        if (!(v[i] > v[i - 1]))
            throw std::invalid_argument(std::string("action_grid.") + name + " must be strictly increasing");
}

}  // namespace

void ActionGrid::validate() const {
    require_increasing(acb_levels, "acb_levels");
    require_increasing(bo_levels, "bo_levels");
    require_increasing(channel_levels, "channel_levels");
    if (!(acb_levels.front() > 0.0) || acb_levels.back() > 1.0)
        throw std::invalid_argument("action_grid.acb_levels must lie in (0, 1]");
    if (bo_levels.front() < 0)
        throw std::invalid_argument("action_grid.bo_levels must be nonnegative");
    if (channel_levels.front() < 1)
        throw std::invalid_argument("action_grid.channel_levels must be positive");
}

ControlAction formula_acb(const BacklogEstimate& estimate, const ControlAction& base) {
    if (base.num_channels < 1)
        throw std::invalid_argument("formula_acb: need at least one channel");
    ControlAction a = base;
    const double n = std::isfinite(estimate.value) ? std::max(estimate.value, 1.0) : 1.0;
    a.acb_factor = std::min(1.0, base.num_channels / n);
    return a;
}

ControlAction genie_acb(std::size_t true_backlog, const ControlAction& base) {
    return formula_acb({static_cast<double>(true_backlog), estimators::EstimateSource::genie, false}, base);
}

TabularQ::TabularQ(int num_actions) : num_actions_(num_actions) {
    if (num_actions < 1)
        throw std::invalid_argument("TabularQ: need at least one action");
}

std::vector<double>& TabularQ::row(int state) {
    auto [it, inserted] = table_.try_emplace(state);
    if (inserted)
        it->second.assign(static_cast<std::size_t>(num_actions_), 0.0);
    return it->second;
}

void TabularQ::update(int state, int action, double reward, int next_state, bool terminal, double alpha,
                      double gamma) {
    if (action < 0 || action >= num_actions_)
        throw std::invalid_argument("TabularQ::update: action out of range");
    if (!(alpha > 0.0 && alpha <= 1.0) || !(gamma >= 0.0 && gamma < 1.0))
        throw std::invalid_argument("TabularQ::update: need alpha in (0,1] and gamma in [0,1)");
    const double bootstrap = terminal ? 0.0 : max_value(next_state);
    double& q = row(state)[static_cast<std::size_t>(action)];
    q += alpha * (reward + gamma * bootstrap - q);
}

double TabularQ::value(int state, int action) const {
    auto it = table_.find(state);
    return it == table_.end() ? 0.0 : it->second.at(static_cast<std::size_t>(action));
}

double TabularQ::max_value(int state) const {
    auto it = table_.find(state);
    return it == table_.end() ? 0.0 : *std::max_element(it->second.begin(), it->second.end());
}

int TabularQ::greedy(int state) const {
    auto it = table_.find(state);
    if (it == table_.end())
        return 0;
    return static_cast<int>(std::max_element(it->second.begin(), it->second.end()) - it->second.begin());
}

void TabularQ::dump_csv(std::ostream& out) const {
    out << "state_bucket,action,value\n";
    for (const auto& [state, values] : table_)
        for (std::size_t a = 0; a < values.size(); ++a)
            out << state << ',' << a << ',' << values[a] << '\n';
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0)
        throw std::invalid_argument("ReplayBuffer: capacity must be positive");
    items_.reserve(std::min<std::size_t>(capacity, 1 << 14));
}

void ReplayBuffer::push(Transition t) {
    if (items_.size() < capacity_) {
        items_.push_back(std::move(t));
    } else {
        items_[next_] = std::move(t);
    }
    next_ = (next_ + 1) % capacity_;
}

std::vector<std::size_t> ReplayBuffer::sample(std::size_t batch, RngStream& rng) const {
    if (items_.empty())
        throw std::logic_error("ReplayBuffer::sample on an empty buffer");
    std::vector<std::size_t> idx(batch);
    for (auto& i : idx)
        i = rng.uniform_int(items_.size());
    return idx;
}

int argmax(const nn::Vector& values) {
    if (values.size() == 0)
        throw std::invalid_argument("argmax of an empty vector");
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < values.size(); ++i)
        if (values[i] > values[best])
            best = i;
    return static_cast<int>(best);
}

double bellman_target(double reward, double gamma, double max_next_q, bool terminal) {
    return terminal ? reward : reward + gamma * max_next_q;
}

int dqn_select_action(const nn::Mlp& net, const nn::Vector& state, double epsilon, RngStream& rng) {
    if (!(epsilon >= 0.0 && epsilon <= 1.0))
        throw std::invalid_argument("dqn_select_action: epsilon must lie in [0, 1]");
    if (rng.uniform01() < epsilon)
        return static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(net.outputs())));
    return argmax(net.forward(state));
}

DqnAgent::DqnAgent(int state_dim, int num_actions, DqnConfig config, RngStream& init)
    : config_(config), buffer_(config.capacity), adam_(config.adam) {
    std::vector<int> sizes{state_dim};
    sizes.insert(sizes.end(), config_.hidden.begin(), config_.hidden.end());
    sizes.push_back(num_actions);
    online_ = nn::Mlp(sizes, nn::Activation::relu, nn::Activation::identity, init);
    target_ = online_;
}

DqnAgent::DqnAgent(DqnConfig config, nn::Mlp net)
    : config_(std::move(config)), online_(std::move(net)), target_(online_), buffer_(config_.capacity),
      adam_(config_.adam) {}

int DqnAgent::select(const nn::Vector& state, double epsilon, RngStream& rng) const {
    return dqn_select_action(online_, state, epsilon, rng);
}

std::optional<double> DqnAgent::train_step(RngStream& rng) {
    if (buffer_.size() < static_cast<std::size_t>(config_.batch))
        return std::nullopt;
    const auto idx = buffer_.sample(static_cast<std::size_t>(config_.batch), rng);
    std::vector<nn::Sample> batch;
    batch.reserve(idx.size());
    const int n = online_.outputs();
    for (std::size_t i : idx) {
        const Transition& t = buffer_[i];
        const double max_next = t.terminal ? 0.0 : target_.forward(t.next_state).maxCoeff();
        nn::Sample s{t.state, nn::Vector::Zero(n), nn::Vector::Zero(n)};
        s.target[t.action] = bellman_target(t.reward, config_.gamma, max_next, t.terminal);
        s.mask[t.action] = 1.0;
        batch.push_back(std::move(s));
    }
    const nn::MlpGradients grads = nn::backprop(online_, config_.loss, batch);
    adam_.step(online_.parameters(), nn::views(grads.layers));
    if (!nn::all_finite(online_.parameters()))
        throw nn::NumericError("dqn_train_step: non-finite parameter");
    ++train_steps_;
    if (train_steps_ % config_.target_refresh == 0)
        sync_target();
    return grads.loss;
}

EpsilonSchedule::EpsilonSchedule(double start, double floor, double decay)
    : value_(start), floor_(floor), decay_(decay) {
    if (!(start >= 0.0 && start <= 1.0) || !(floor >= 0.0 && floor <= start) || !(decay > 0.0 && decay <= 1.0))
        throw std::invalid_argument("EpsilonSchedule: need 0 <= floor <= start <= 1 and decay in (0, 1]");
}

std::vector<ActionVariable> controlled_variables(Scheme scheme) {
    switch (scheme) {
    case Scheme::ACB: return {ActionVariable::acb};
    case Scheme::ACB_BO: return {ActionVariable::acb, ActionVariable::backoff};
    case Scheme::DRA: return {ActionVariable::channels};
    }
    return {};
}

std::size_t CooperativeAgents::levels(ActionVariable v) const {
    switch (v) {
    case ActionVariable::acb: return grid_.acb_levels.size();
    case ActionVariable::backoff: return grid_.bo_levels.size();
    case ActionVariable::channels: return grid_.channel_levels.size();
    }
    return 0;
}

CooperativeAgents::CooperativeAgents(std::vector<ActionVariable> variables, const ActionGrid& grid, int state_dim,
                                     DqnConfig config, RngStream& init, bool joint)
    : variables_(std::move(variables)), grid_(grid), joint_(joint) {
    if (variables_.empty())
        throw std::invalid_argument("CooperativeAgents: no action variables");
    if (joint_) {
        std::size_t product = 1;
        for (auto v : variables_)
            product *= levels(v);
        agents_.emplace_back(state_dim, static_cast<int>(product), config, init);
    } else {
        for (auto v : variables_)
            agents_.emplace_back(state_dim, static_cast<int>(levels(v)), config, init);
    }
}

CooperativeAgents::CooperativeAgents(std::vector<ActionVariable> variables, const ActionGrid& grid, DqnConfig config,
                                     std::vector<nn::Mlp> nets, bool joint)
    : variables_(std::move(variables)), grid_(grid), joint_(joint) {
    const std::size_t expected = joint_ ? 1 : variables_.size();
    if (nets.size() != expected)
        throw std::invalid_argument("CooperativeAgents: expected " + std::to_string(expected) + " networks");
    for (std::size_t k = 0; k < nets.size(); ++k) {
        std::size_t want = 1;
        if (joint_)
            for (auto v : variables_)
                want *= levels(v);
        else
            want = levels(variables_[k]);
        if (static_cast<std::size_t>(nets[k].outputs()) != want)
            throw std::invalid_argument("CooperativeAgents: network output count does not match the action grid");
        agents_.emplace_back(config, std::move(nets[k]));
    }
}

std::vector<int> CooperativeAgents::select(const nn::Vector& state, double epsilon, RngStream& rng) const {
    std::vector<int> choice(variables_.size());
    if (!joint_) {
        for (std::size_t k = 0; k < agents_.size(); ++k)
            choice[k] = agents_[k].select(state, epsilon, rng);
        return choice;
    }
    // mixed radix, first variable most significant
    int flat = agents_.front().select(state, epsilon, rng);
    for (std::size_t k = variables_.size(); k-- > 0;) {
        const int radix = static_cast<int>(levels(variables_[k]));
        choice[k] = flat % radix;
        flat /= radix;
    }
    return choice;
}

ControlAction CooperativeAgents::to_action(const std::vector<int>& choice, const ControlAction& base) const {
    if (choice.size() != variables_.size())
        throw std::invalid_argument("to_action: one index per variable required");
    ControlAction a = base;
    for (std::size_t k = 0; k < variables_.size(); ++k) {
        const auto i = static_cast<std::size_t>(choice[k]);
        switch (variables_[k]) {
        case ActionVariable::acb: a.acb_factor = grid_.acb_levels.at(i); break;
        case ActionVariable::backoff: a.backoff_window = grid_.bo_levels.at(i); break;
        case ActionVariable::channels: a.num_channels = grid_.channel_levels.at(i); break;
        }
    }
    return a;
}

void CooperativeAgents::remember(const nn::Vector& state, const std::vector<int>& choice, double reward,
                                 const nn::Vector& next_state, bool terminal) {
    if (!joint_) {
        for (std::size_t k = 0; k < agents_.size(); ++k)
            agents_[k].remember({state, choice[k], reward, next_state, terminal});
        return;
    }
    int flat = 0;
    for (std::size_t k = 0; k < variables_.size(); ++k)
        flat = flat * static_cast<int>(levels(variables_[k])) + choice[k];
    agents_.front().remember({state, flat, reward, next_state, terminal});
}

void CooperativeAgents::train_step(RngStream& rng) {
    for (auto& agent : agents_)
        agent.train_step(rng);
}

ControlAction cooperative_select(const CooperativeAgents& agents, const nn::Vector& state, double epsilon,
                                 RngStream& rng, const ControlAction& base) {
    return agents.to_action(agents.select(state, epsilon, rng), base);
}

}  // namespace rach::control
