#pragma once

#include <cstdint>
#include <deque>
#include <span>
#include <vector>

#include "rach/estimators.hpp"
#include "rach/neural.hpp"
#include "rach/sim.hpp"
#include "rach/traffic.hpp"

namespace rach::predictor {

using estimators::BacklogEstimate;
using estimators::EstimateSource;

inline constexpr int kFeatureCount = 5;

// (I/R, S/R, C/R, p, W/W_max) for one frame.
nn::Vector frame_features(const Observation& obs, int max_backoff);

// The last `length` frames' features, oldest first, zero-padded at the front
// until enough frames have been seen.
class ObservationWindow {
public:
    ObservationWindow(int length, int max_backoff);

    void push(const Observation& obs);
    void clear();

    nn::Matrix matrix() const; // kFeatureCount x length
    nn::Vector flattened() const;
    int length() const { return length_; }

private:
    int length_;
    int max_backoff_;
    std::deque<nn::Vector> rows_;
};

struct PredictorConfig {
    int window = 10;
    int hidden = 32;
    double scale = 54.0;  // outputs are trained as backlog / scale
    double cap = 540.0;   // predictions are clamped to [0, cap]
    int batch = 1;        // update batch: the new record plus batch - 1 replayed ones
    int replay = 64;      // recent labeled windows kept for mini-batching
    int horizon = 8;      // pending inputs older than this many frames are stale
    nn::AdamConfig adam;
};

struct LabelRecord {
    FrameIndex frame = 0;
    double predicted = 0.0;
    double label = 0.0;
    EstimateSource label_source = EstimateSource::MoM_full;
};

// LSTM backlog predictor trained online from one-frame-delayed labels.
class LstmPredictor {
public:
    LstmPredictor(PredictorConfig config, RngStream& init);
    LstmPredictor(PredictorConfig config, nn::LstmRegressor net);

    // Stateless prediction for a window.
    BacklogEstimate predict(const nn::Matrix& window) const;
    // Prediction for frame t; remembers the window so a later label for t
    // can train on it.
    BacklogEstimate predict_at(FrameIndex frame, const nn::Matrix& window);

    // One Adam step on the squared error between the prediction for
    // record.frame and record.label. Throws std::invalid_argument for a
    // record whose window is no longer held. Returns the squared error of the
    // new record in devices^2, measured before the step.
    double online_update(const LabelRecord& record, RngStream& replay_rng);

    // Forget pending windows (episode boundary). Replay contents are kept.
    void clear_pending();

    const PredictorConfig& config() const { return config_; }
    nn::LstmRegressor& network() { return net_; }
    const nn::LstmRegressor& network() const { return net_; }
    nn::AdamState& optimizer() { return adam_; }

private:
    struct Pending {
        FrameIndex frame;
        nn::Matrix window;
    };

    double raw(const nn::Matrix& window) const;

    PredictorConfig config_;
    nn::LstmRegressor net_;
    nn::AdamState adam_;
    std::deque<Pending> pending_;
    std::deque<nn::SequenceSample> replay_;
    FrameIndex newest_frame_ = -1;
};

struct CorrectorConfig {
    std::vector<int> hidden{64, 64};
    double scale = 54.0;
    int max_backoff = 32;
    int batch = 64;
    nn::AdamConfig adam;
};

// Single-frame backlog estimator: features of O^t -> N-hat^t.
class DnnCorrector {
public:
    DnnCorrector(CorrectorConfig config, nn::Mlp net);

    BacklogEstimate estimate(const Observation& obs) const;

    const CorrectorConfig& config() const { return config_; }
    const nn::Mlp& network() const { return net_; }

private:
    CorrectorConfig config_;
    nn::Mlp net_;
};

struct LabeledObservation {
    Observation obs;
    double backlog = 0.0;
};

struct DnnTrainingResult {
    DnnCorrector model;
    std::vector<double> epoch_mse; // devices^2, mean over each epoch's batches
    double final_mse = 0.0;        // full-dataset mse after the last epoch
};

// Mse training with seeded init and seeded per-epoch shuffling.
DnnTrainingResult pretrain_dnn(std::span<const LabeledObservation> dataset, int epochs, std::uint64_t seed,
                               const CorrectorConfig& config = {});

double mean_absolute_error(const DnnCorrector& model, std::span<const LabeledObservation> data);

// How corrector training pairs are generated: episodes run under a noisy
// genie ACB controller so the frames look like closed-loop operation.
struct DatasetSpec {
    int channels = 54;
    int retransmission_limit = 10;
    int episode_length = 100;
    TrafficProfile traffic;
    double traffic_scale_min = 0.5; // per-episode A multiplier range
    double traffic_scale_max = 2.0;
    std::vector<double> acb_levels;
    std::vector<int> bo_levels{0};
    double control_noise = 0.5;      // log-normal sigma on the backlog fed to the formula
    double random_action_prob = 0.2; // otherwise a uniformly random ACB level
    double max_backlog = 300.0;      // frames with a larger true backlog are skipped
};

std::vector<LabeledObservation> generate_corrector_dataset(std::size_t pairs, const DatasetSpec& spec,
                                                           std::uint64_t seed);

}  // namespace rach::predictor
