#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rach/config.hpp"
#include "rach/stats.hpp"

namespace rach {

inline constexpr const char* kFrameCsvHeader =
    "trial,episode,frame,scheme,optimizer,p_acb,bo_window,channels,idle,success,collision,arrivals,true_backlog,"
    "predicted_backlog,label_backlog,drops,transmissions,reward";
inline constexpr const char* kEpisodeCsvHeader =
    "trial,episode,successes,access_success_prob,mean_delay,transmissions,drops,pred_mae";

struct FrameRow {
    int trial = 0;
    int episode = 0;
    int frame = 0; // index within the episode
    ControlAction action;
    int idle = 0;
    int success = 0;
    int collision = 0;
    std::size_t arrivals = 0;
    std::size_t true_backlog = 0;
    std::optional<double> predicted;
    std::optional<double> label;
    std::size_t drops = 0;
    std::size_t transmissions = 0;
};

struct EpisodeMetrics {
    int trial = 0;
    int episode = 0;
    long successes = 0;
    long arrivals = 0;
    double access_success_prob = 1.0; // successes / arrivals; 1 with no arrivals
    double mean_delay = 0.0;          // frames, over successful devices; 0 with none
    long transmissions = 0;
    long drops = 0;
    std::optional<double> pred_mae;   // |prediction - true backlog|, when the optimizer predicts
};

struct TrialResult {
    std::vector<EpisodeMetrics> episodes;
    std::vector<FrameRow> frames; // empty unless frames are kept
    std::vector<nn::LayerRecord> checkpoint;
};

struct ExperimentResult {
    ExperimentConfig config;
    std::vector<TrialResult> trials;
};

struct RunOptions {
    bool keep_frames = true;
    // Overrides config.checkpoint / config.corrector_checkpoint when set.
    std::optional<std::vector<nn::LayerRecord>> checkpoint;
    std::shared_ptr<const predictor::DnnCorrector> corrector;
    // Called after each trial with its optimizer, before it is destroyed.
    std::function<void(int trial, control::Optimizer&)> inspect;
};

std::uint64_t trial_seed(std::uint64_t master, int trial);

std::unique_ptr<control::Optimizer> make_optimizer(const ExperimentConfig& config, std::uint64_t seed,
                                                   std::shared_ptr<const predictor::DnnCorrector> corrector);

std::shared_ptr<const predictor::DnnCorrector> load_corrector(const ExperimentConfig& config,
                                                              const std::filesystem::path& path);

// One trial: a fresh simulator, traffic stream and optimizer, all seeded
// from trial_seed(config.seed, trial).
TrialResult run_trial(const ExperimentConfig& config, int trial, const RunOptions& options);

// All trials on a worker pool; results are ordered by trial index.
ExperimentResult run_experiment(const ExperimentConfig& config, const RunOptions& options = {});

void write_frame_csv(std::ostream& out, const ExperimentResult& result);
void write_episode_csv(std::ostream& out, const ExperimentResult& result);
nlohmann::json summarize(const ExperimentResult& result);

// Writes frames.csv (if kept), episodes.csv, summary.json, config.json and,
// for learned optimizers, checkpoint_trial<k>.rachnn.
void write_outputs(const ExperimentResult& result, const std::filesystem::path& dir);

struct EpisodeCsvRow {
    int trial = 0;
    int episode = 0;
    double successes = 0.0;
};
std::vector<EpisodeCsvRow> read_episode_csv(std::istream& in);
// Per-episode successes averaged over trials.
std::vector<double> mean_curve(const std::vector<EpisodeCsvRow>& rows);
std::vector<double> mean_curve(const ExperimentResult& result);

enum class PairUnit { episode, trial };

struct ComparisonOptions {
    PairUnit unit = PairUnit::episode;
    // Trial unit: each trial contributes the mean of its last N episodes
    // (0 = all episodes).
    int last_episodes = 0;
};

struct Comparison {
    std::vector<std::string> names;
    std::vector<double> means;
    struct Pair {
        std::size_t a = 0;
        std::size_t b = 0;
        stats::PairedSummary summary; // a - b
    };
    std::vector<Pair> pairs;
};

// Successes paired across shared seeds. Throws ConfigError when the
// configurations differ in scheme, traffic, seed or run shape.
Comparison compare(const std::vector<ExperimentResult>& results, const ComparisonOptions& options = {});
void check_comparable(const std::vector<ExperimentConfig>& configs);
nlohmann::json to_json(const Comparison& comparison);
void write_comparison_csv(std::ostream& out, const Comparison& comparison);

}  // namespace rach
