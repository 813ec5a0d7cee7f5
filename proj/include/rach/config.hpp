#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "rach/optimizers.hpp"
#include "rach/traffic.hpp"

namespace rach {

enum class OptimizerKind { genie, DA, MoM_idle, MoM_full, MLE, SL_formula, tabularQ, DQN, CPCL };

std::string_view to_string(OptimizerKind kind);
std::string_view to_string(control::Scheme scheme);
std::string_view to_string(control::LabelSource source);
std::string_view to_string(TrafficKind kind);

// Validation failure; field() is the dotted path of the offending key.
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string field, const std::string& message)
        : std::runtime_error(field + ": " + message), field_(std::move(field)) {}
    const std::string& field() const { return field_; }

private:
    std::string field_;
};

struct PredictorHyper {
    int window = 10;
    int hidden = 32;
    int batch = 1;
    int replay = 64;
    double learning_rate = 1e-3;
    // nullopt: MoM_full for SL_formula, DNN for CPCL.
    std::optional<control::LabelSource> label_source;
    bool operator==(const PredictorHyper&) const = default;
};

struct AgentHyper {
    std::vector<int> hidden{64, 64};
    double gamma = 0.9;
    int batch = 32;
    int target_refresh = 100;
    std::size_t buffer = 10000;
    double learning_rate = 1e-3;
    double epsilon_start = 1.0;
    double epsilon_floor = 0.05;
    double epsilon_decay = 0.999;
    bool joint = false;
    bool state_includes_observations = false; // CPCL only
    bool operator==(const AgentHyper&) const = default;
};

struct TabularHyper {
    double alpha = 0.1;
    double bucket_width = 13.5;
    int buckets = 40;
    bool operator==(const TabularHyper&) const = default;
};

struct CorrectorHyper {
    std::vector<int> hidden{64, 64};
    int batch = 64;
    int epochs = 20;
    std::size_t dataset_pairs = 100000;
    double holdout_fraction = 0.1;
    double learning_rate = 1e-3;
    double max_backlog = 300.0;
    bool operator==(const CorrectorHyper&) const = default;
};

struct ExperimentConfig {
    control::Scheme scheme = control::Scheme::ACB;
    OptimizerKind optimizer = OptimizerKind::genie;
    int channels = 54;
    int retransmission_limit = 10;
    TrafficProfile traffic;
    int episode_length = 100;
    int episodes = 100;
    std::uint64_t seed = 1;
    int trials = 1;
    int threads = 0; // 0: one per hardware thread
    bool write_frames = true;

    control::ActionGrid grid = control::ActionGrid::defaults();
    int backoff_window = 0; // fixed W for rule-based ACB_BO controllers
    int backlog_cap = 540;  // estimator search range and prediction clamp
    double da_drift = 2.39;
    PredictorHyper predictor;
    AgentHyper agent;
    TabularHyper tabular;
    CorrectorHyper corrector;

    // Learning on: parameters update online. Off: frozen, with the fixed
    // exploration rate below.
    bool learning = true;
    double eval_epsilon = 0.0;
    std::optional<std::string> checkpoint;           // optimizer parameters to load
    std::optional<std::string> corrector_checkpoint; // DNN corrector for CPCL labels

    bool operator==(const ExperimentConfig&) const = default;
};

// Throws ConfigError. Unknown keys are rejected at every level.
ExperimentConfig config_from_json(const nlohmann::json& doc);
nlohmann::json config_to_json(const ExperimentConfig& config);
ExperimentConfig load_config(const std::filesystem::path& path);
void validate(const ExperimentConfig& config);

control::ControlSettings control_settings(const ExperimentConfig& config);
predictor::CorrectorConfig corrector_config(const ExperimentConfig& config);
control::LabelSource effective_label_source(const ExperimentConfig& config);

}  // namespace rach
