#include "rach/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace rach::predictor {

nn::Vector frame_features(const Observation& obs, int max_backoff) {
    const double r = obs.channels();
    nn::Vector f(kFeatureCount);
    f << obs.idle / r, obs.success / r, obs.collision / r, obs.action.acb_factor,
        max_backoff > 0 ? static_cast<double>(obs.action.backoff_window) / max_backoff : 0.0;
    return f;
}

ObservationWindow::ObservationWindow(int length, int max_backoff) : length_(length), max_backoff_(max_backoff) {
    if (length < 1)
        throw std::invalid_argument("ObservationWindow: length must be at least 1");
}

void ObservationWindow::push(const Observation& obs) {
    rows_.push_back(frame_features(obs, max_backoff_));
    if (static_cast<int>(rows_.size()) > length_)
        rows_.pop_front();
}

void ObservationWindow::clear() { rows_.clear(); }

nn::Matrix ObservationWindow::matrix() const {
    nn::Matrix m = nn::Matrix::Zero(kFeatureCount, length_);
    const int offset = length_ - static_cast<int>(rows_.size());
    for (std::size_t k = 0; k < rows_.size(); ++k)
        m.col(offset + static_cast<int>(k)) = rows_[k];
    return m;
}

nn::Vector ObservationWindow::flattened() const {
    const nn::Matrix m = matrix();
    return Eigen::Map<const nn::Vector>(m.data(), m.size());
}

LstmPredictor::LstmPredictor(PredictorConfig config, RngStream& init)
    : LstmPredictor(config, nn::LstmRegressor(kFeatureCount, config.hidden, 1, init)) {}

LstmPredictor::LstmPredictor(PredictorConfig config, nn::LstmRegressor net)
    : config_(config), net_(std::move(net)), adam_(config.adam) {
    if (config_.window < 1 || config_.batch < 1 || config_.replay < 1 || config_.horizon < 1)
        throw std::invalid_argument("PredictorConfig: window, batch, replay and horizon must be positive");
    if (!(config_.scale > 0.0) || !(config_.cap > 0.0))
        throw std::invalid_argument("PredictorConfig: scale and cap must be positive");
    if (net_.cell().input_size() != kFeatureCount || net_.head().outputs() != 1)
        throw std::invalid_argument("LstmPredictor: network shape does not match the feature layout");
}

double LstmPredictor::raw(const nn::Matrix& window) const {
    if (window.rows() != kFeatureCount || window.cols() != config_.window)
        throw std::invalid_argument("LstmPredictor: window must be " + std::to_string(kFeatureCount) + " x " +
                                    std::to_string(config_.window));
    return net_.forward(window)[0] * config_.scale;
}

BacklogEstimate LstmPredictor::predict(const nn::Matrix& window) const {
    const double y = raw(window);
    const double clamped = std::isfinite(y) ? std::clamp(y, 0.0, config_.cap) : config_.cap;
    return {clamped, EstimateSource::LSTM, false};
}

BacklogEstimate LstmPredictor::predict_at(FrameIndex frame, const nn::Matrix& window) {
    const BacklogEstimate out = predict(window);
    pending_.push_back({frame, window});
    newest_frame_ = std::max(newest_frame_, frame);
    while (!pending_.empty() && pending_.front().frame + config_.horizon <= newest_frame_)
        pending_.pop_front();
    return out;
}

double LstmPredictor::online_update(const LabelRecord& record, RngStream& replay_rng) {
    if (!(record.label >= 0.0) || !std::isfinite(record.label))
        throw std::invalid_argument("online_update: label must be finite and nonnegative");
    auto it = std::find_if(pending_.begin(), pending_.end(),
                           [&](const Pending& p) { return p.frame == record.frame; });
    if (it == pending_.end())
        throw std::invalid_argument("online_update: no pending prediction for frame " +
                                    std::to_string(record.frame) + " (stale or already consumed)");
    nn::SequenceSample fresh{std::move(it->window), nn::Vector::Constant(1, record.label / config_.scale)};
    pending_.erase(it);

    const double before = raw(fresh.sequence) - record.label;

    std::vector<nn::SequenceSample> batch;
    batch.reserve(static_cast<std::size_t>(config_.batch));
    batch.push_back(fresh);
    for (int k = 1; k < config_.batch && !replay_.empty(); ++k)
        batch.push_back(replay_[replay_rng.uniform_int(replay_.size())]);

    const nn::LstmRegressorGradients grads = nn::backprop(net_, nn::Loss::mse, batch);
    adam_.step(net_.parameters(), grads.views());
    if (!nn::all_finite(net_.parameters()))
        throw nn::NumericError("online_update: non-finite LSTM parameter");

    replay_.push_back(std::move(fresh));
    if (static_cast<int>(replay_.size()) > config_.replay)
        replay_.pop_front();
    return before * before;
}

void LstmPredictor::clear_pending() {
    pending_.clear();
    newest_frame_ = -1;
}

DnnCorrector::DnnCorrector(CorrectorConfig config, nn::Mlp net) : config_(std::move(config)), net_(std::move(net)) {
    if (net_.inputs() != kFeatureCount || net_.outputs() != 1)
        throw std::invalid_argument("DnnCorrector: network must map 5 features to 1 output");
}

BacklogEstimate DnnCorrector::estimate(const Observation& obs) const {
    const double y = net_.forward(frame_features(obs, config_.max_backoff))[0] * config_.scale;
    return {std::isfinite(y) ? std::max(0.0, y) : 0.0, EstimateSource::DNN, obs.idle == 0};
}

namespace {

nn::Mlp corrector_network(const CorrectorConfig& config, RngStream& rng) {
    std::vector<int> sizes{kFeatureCount};
    sizes.insert(sizes.end(), config.hidden.begin(), config.hidden.end());
    sizes.push_back(1);
    return nn::Mlp(sizes, nn::Activation::relu, nn::Activation::identity, rng);
}

nn::Sample to_sample(const LabeledObservation& item, const CorrectorConfig& config) {
    return {frame_features(item.obs, config.max_backoff), nn::Vector::Constant(1, item.backlog / config.scale), {}};
}

}  // namespace

DnnTrainingResult pretrain_dnn(std::span<const LabeledObservation> dataset, int epochs, std::uint64_t seed,
                               const CorrectorConfig& config) {
    if (dataset.empty())
        throw std::invalid_argument("pretrain_dnn: empty dataset");
    if (epochs < 1 || config.batch < 1)
        throw std::invalid_argument("pretrain_dnn: epochs and batch must be positive");
    RngStream init(seed, streams::init);
    RngStream shuffle(seed, streams::replay);
    nn::Mlp net = corrector_network(config, init);
    nn::AdamState adam(config.adam);

    std::vector<nn::Sample> samples;
    samples.reserve(dataset.size());
    for (const auto& item : dataset)
        samples.push_back(to_sample(item, config));

    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> curve;
    std::vector<nn::Sample> batch;
    const double s2 = config.scale * config.scale;
    for (int epoch = 0; epoch < epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle.uniform_int(i)]);
        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch));
            batch.clear();
            for (std::size_t k = start; k < end; ++k)
                batch.push_back(samples[order[k]]);
            const nn::MlpGradients grads = nn::backprop(net, nn::Loss::mse, batch);
            adam.step(net.parameters(), nn::views(grads.layers));
            loss_sum += grads.loss;
            ++batches;
        }
        if (!nn::all_finite(net.parameters()))
            throw nn::NumericError("pretrain_dnn: non-finite parameter");
        curve.push_back(loss_sum / static_cast<double>(batches) * s2);
    }
    double mse = 0.0;
    for (const auto& s : samples) {
        const double e = net.forward(s.input)[0] - s.target[0];
        mse += e * e;
    }
    mse = mse / static_cast<double>(samples.size()) * s2;
    return {DnnCorrector(config, std::move(net)), std::move(curve), mse};
}

double mean_absolute_error(const DnnCorrector& model, std::span<const LabeledObservation> data) {
    if (data.empty())
        return 0.0;
    double sum = 0.0;
    for (const auto& item : data)
        sum += std::abs(model.estimate(item.obs).value - item.backlog);
    return sum / static_cast<double>(data.size());
}

namespace {

double nearest_level(const std::vector<double>& levels, double p) {
    double best = levels.front();
    for (double level : levels)
        if (std::abs(level - p) < std::abs(best - p))
            best = level;
    return best;
}

}  // namespace

std::vector<LabeledObservation> generate_corrector_dataset(std::size_t pairs, const DatasetSpec& spec,
                                                           std::uint64_t seed) {
    if (spec.acb_levels.empty() || spec.bo_levels.empty())
        throw std::invalid_argument("generate_corrector_dataset: empty action levels");
    RngStream control(seed, streams::dataset);
    std::vector<LabeledObservation> out;
    out.reserve(pairs);
    for (std::uint64_t episode = 0; out.size() < pairs; ++episode) {
        const std::uint64_t episode_seed = derive_seed(seed, episode);
        RngStream traffic_rng(episode_seed, streams::traffic);
        TrafficProfile profile = spec.traffic;
        const double scale =
            spec.traffic_scale_min + (spec.traffic_scale_max - spec.traffic_scale_min) * control.uniform01();
        profile.total_per_period = static_cast<std::uint64_t>(std::llround(profile.total_per_period * scale));
        TrafficGenerator traffic(profile);
        Simulator sim(spec.retransmission_limit, spec.channels, episode_seed);
        const int backoff = spec.bo_levels[control.uniform_int(spec.bo_levels.size())];
        for (int f = 0; f < spec.episode_length && out.size() < pairs; ++f) {
            const std::size_t arrivals = traffic.arrivals_at(sim.frame(), traffic_rng);
            const double backlog = static_cast<double>(sim.backlog_size() + arrivals);
            ControlAction action{1.0, backoff, spec.channels};
            if (control.uniform01() < spec.random_action_prob) {
                action.acb_factor = spec.acb_levels[control.uniform_int(spec.acb_levels.size())];
            } else {
                const double noisy = backlog * std::exp(spec.control_noise * control.normal());
                action.acb_factor = nearest_level(spec.acb_levels, std::min(1.0, spec.channels / std::max(noisy, 1.0)));
            }
            const FrameReport rep = sim.step(action, arrivals);
            if (static_cast<double>(rep.true_backlog) <= spec.max_backlog)
                out.push_back({rep.observation, static_cast<double>(rep.true_backlog)});
        }
    }
    return out;
}

}  // namespace rach::predictor
