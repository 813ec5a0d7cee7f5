#pragma once

#include <filesystem>
#include <vector>

#include <nlohmann/json.hpp>

#include "rach/config.hpp"
#include "rach/experiment.hpp"

namespace rach {

enum class PretrainTarget { dnn_corrector, dqn_agent };

struct CorrectorPretrainResult {
    predictor::DnnTrainingResult training;
    std::size_t train_pairs = 0;
    std::size_t holdout_pairs = 0;
    double holdout_mae = 0.0;          // devices
    double holdout_mom_full_mae = 0.0; // same split, MoM-full estimator
};

// Generates config.corrector.dataset_pairs labelled frames from seed, holds
// out the trailing holdout_fraction, and trains on the rest.
CorrectorPretrainResult pretrain_corrector(const ExperimentConfig& config, std::uint64_t seed);

struct AgentPretrainResult {
    std::vector<nn::LayerRecord> checkpoint;
    std::vector<double> curve;      // successes per training episode
    double trained_eval_mean = 0.0; // greedy evaluation, successes per episode
    double untrained_eval_mean = 0.0;
};

// Trains config.optimizer (DQN, CPCL or SL_formula) for config.episodes
// episodes of trial 0, then evaluates the result and a freshly initialised
// copy greedily, learning off, on `eval_episodes` episodes of another seed.
AgentPretrainResult pretrain_agent(const ExperimentConfig& config, int eval_episodes = 20,
                                   const RunOptions& options = {});

// Runs the target, writes the checkpoint to `checkpoint` and the training
// curve plus a summary into `out_dir`. Returns the summary.
nlohmann::json run_pretrain(const ExperimentConfig& config, PretrainTarget target,
                            const std::filesystem::path& checkpoint, const std::filesystem::path& out_dir);

}  // namespace rach
