// rachsim: seeded f-ALOHA access-control experiments.

#include <cstdlib>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <fmt/core.h>

#include "rach/config.hpp"
#include "rach/experiment.hpp"
#include "rach/pretrain.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<int> trials;
    std::string out = "out";
    std::string checkpoint;
};

rach::ExperimentConfig load(const std::string& path, const Common& common) {
    auto c = rach::load_config(path);
    if (common.seed)
        c.seed = *common.seed;
    if (common.trials)
        c.trials = *common.trials;
    if (!common.checkpoint.empty())
        c.checkpoint = common.checkpoint;
    rach::validate(c);
    return c;
}

void add_common(CLI::App* cmd, Common& common, bool checkpoint) {
    cmd->add_option("--seed", common.seed, "master seed (overrides the config)");
    cmd->add_option("--trials", common.trials, "number of trials (overrides the config)");
    cmd->add_option("--out", common.out, "output directory")->capture_default_str();
    if (checkpoint)
        cmd->add_option("--checkpoint", common.checkpoint, "checkpoint to load");
}

int simulate(const Common& common) {
    const auto c = load(common.config, common);
    const auto result = rach::run_experiment(c);
    rach::write_outputs(result, common.out);
    std::cout << rach::summarize(result).dump(2) << '\n';
    return 0;
}

int pretrain(const Common& common, const std::string& target_name) {
    Common no_ckpt = common;
    no_ckpt.checkpoint.clear();
    const auto c = load(common.config, no_ckpt);
    const auto target =
        target_name == "dnn_corrector" ? rach::PretrainTarget::dnn_corrector : rach::PretrainTarget::dqn_agent;
    const std::filesystem::path ckpt =
        common.checkpoint.empty() ? std::filesystem::path(common.out) / (target_name + ".rachnn")
                                  : std::filesystem::path(common.checkpoint);
    std::cout << rach::run_pretrain(c, target, ckpt, common.out).dump(2) << '\n';
    return 0;
}

int compare(const std::vector<std::string>& configs, const Common& common, const std::string& unit, int last) {
    std::vector<rach::ExperimentConfig> cs;
    for (const auto& path : configs)
        cs.push_back(load(path, common));
    rach::check_comparable(cs);
    std::vector<rach::ExperimentResult> results;
    for (auto& c : cs) {
        c.write_frames = false;
        rach::RunOptions options;
        options.keep_frames = false;
        results.push_back(rach::run_experiment(c, options));
    }
    rach::ComparisonOptions options;
    options.unit = unit == "trial" ? rach::PairUnit::trial : rach::PairUnit::episode;
    options.last_episodes = last;
    const auto cmp = rach::compare(results, options);
    std::filesystem::create_directories(common.out);
    std::ofstream json_out(std::filesystem::path(common.out) / "compare.json");
    json_out << rach::to_json(cmp).dump(2) << '\n';
    std::ofstream csv_out(std::filesystem::path(common.out) / "compare.csv");
    rach::write_comparison_csv(csv_out, cmp);
    std::cout << rach::to_json(cmp).dump(2) << '\n';
    return 0;
}

int convergence(const std::string& csv, double tolerance, int window) {
    std::ifstream in(csv);
    if (!in)
        throw std::runtime_error("cannot open " + csv);
    const auto curve = rach::mean_curve(rach::read_episode_csv(in));
    const auto r = rach::stats::convergence_report(curve, tolerance, window);
    nlohmann::json out = {{"converged", r.converged},
                          {"window", r.window},
                          {"tolerance", r.tolerance},
                          {"final_window_mean", r.final_mean},
                          {"episodes", curve.size()}};
    if (r.converged)
        out["episodes_to_converge"] = r.episode;
    else
        out["reason"] = r.reason;
    std::cout << out.dump(2) << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"framed-ALOHA random-access simulator and controller workbench"};
    app.require_subcommand(1);
    Common common;

    auto* sim = app.add_subcommand("simulate", "run trials x episodes and write CSV metrics");
    sim->add_option("--config", common.config, "experiment JSON")->required();
    add_common(sim, common, true);

    std::string target = "dnn_corrector";
    auto* pre = app.add_subcommand("pretrain", "offline training; writes a RACHNN1 checkpoint");
    pre->add_option("--config", common.config, "experiment JSON")->required();
    pre->add_option("--target", target, "dnn_corrector or dqn_agent")
        ->check(CLI::IsMember({"dnn_corrector", "dqn_agent"}))
        ->capture_default_str();
    add_common(pre, common, true);

    std::vector<std::string> configs;
    std::string unit = "episode";
    int last = 0;
    auto* cmp = app.add_subcommand("compare", "paired comparison across shared seeds");
    cmp->add_option("--config", configs, "experiment JSON (repeat, at least two)")->required();
    cmp->add_option("--unit", unit, "pairing unit: episode or trial")
        ->check(CLI::IsMember({"episode", "trial"}))
        ->capture_default_str();
    cmp->add_option("--last", last, "trial unit: average the last N episodes (0 = all)");
    add_common(cmp, common, false);

    std::string csv;
    double tolerance = 0.05;
    int window = 10;
    auto* conv = app.add_subcommand("convergence", "episodes-to-converge of a training run");
    conv->add_option("csv", csv, "episodes.csv of a training run")->required();
    conv->add_option("--tolerance", tolerance, "relative plateau tolerance")->capture_default_str();
    conv->add_option("--window", window, "window length in episodes")->capture_default_str();

    auto* val = app.add_subcommand("validate-config", "check a config and print its normalised form");
    val->add_option("--config", common.config, "experiment JSON")->required();

    CLI11_PARSE(app, argc, argv);
    try {
        if (*sim)
            return simulate(common);
        if (*pre)
            return pretrain(common, target);
        if (*cmp)
            return compare(configs, common, unit, last);
        if (*conv)
            return convergence(csv, tolerance, window);
        if (*val) {
            std::cout << rach::config_to_json(rach::load_config(common.config)).dump(2) << '\n';
            return 0;
        }
    } catch (const rach::ConfigError& e) {
        fmt::print(stderr, "config error: {}\n", e.what());
        return kExitConfig;
    } catch (const rach::nn::NumericError& e) {
        fmt::print(stderr, "numeric failure: {}\n", e.what());
        return kExitNumeric;
    } catch (const std::exception& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return 1;
    }
    return 0;
}
