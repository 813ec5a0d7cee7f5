#include "rach/pretrain.hpp"

#include <fstream>
#include <stdexcept>

#include <fmt/format.h>

#include "rach/checkpoint.hpp"

namespace rach {

CorrectorPretrainResult pretrain_corrector(const ExperimentConfig& c, std::uint64_t seed) {
    const auto cc = corrector_config(c);
    const auto total = c.corrector.dataset_pairs;
    const auto holdout = static_cast<std::size_t>(static_cast<double>(total) * c.corrector.holdout_fraction);
    if (total - holdout < static_cast<std::size_t>(cc.batch))
        throw ConfigError("corrector.dataset_pairs", "training split is smaller than one batch");

    predictor::DatasetSpec spec;
    spec.channels = c.channels;
    spec.retransmission_limit = c.retransmission_limit;
    spec.episode_length = c.episode_length;
    spec.traffic = c.traffic;
    spec.acb_levels = c.grid.acb_levels;
    spec.bo_levels = c.scheme == control::Scheme::ACB_BO ? c.grid.bo_levels : std::vector<int>{c.backoff_window};
    spec.max_backlog = c.corrector.max_backlog;
    const auto data = predictor::generate_corrector_dataset(total, spec, seed);

    const std::span<const predictor::LabeledObservation> all(data);
    const auto train = all.first(total - holdout);
    const auto test = all.subspan(total - holdout);
    auto training = predictor::pretrain_dnn(train, c.corrector.epochs, seed, cc);

    CorrectorPretrainResult out{std::move(training), train.size(), test.size(), 0.0, 0.0};
    if (!test.empty()) {
        out.holdout_mae = predictor::mean_absolute_error(out.training.model, test);
        double sum = 0.0;
        for (const auto& item : test)
            sum += std::abs(estimators::mom_full(item.obs, c.backlog_cap).value - item.backlog);
        out.holdout_mom_full_mae = sum / static_cast<double>(test.size());
    }
    return out;
}

AgentPretrainResult pretrain_agent(const ExperimentConfig& c, int eval_episodes, const RunOptions& options) {
    if (c.optimizer != OptimizerKind::DQN && c.optimizer != OptimizerKind::CPCL &&
        c.optimizer != OptimizerKind::SL_formula)
        throw ConfigError("optimizer", "pretraining needs a learning optimizer (DQN, CPCL or SL_formula)");
    ExperimentConfig train = c;
    train.trials = 1;
    train.learning = true;
    train.write_frames = false;
    RunOptions run = options;
    run.keep_frames = false;
    const auto trained = run_experiment(train, run);

    AgentPretrainResult out;
    out.checkpoint = trained.trials.front().checkpoint;
    for (const auto& m : trained.trials.front().episodes)
        out.curve.push_back(static_cast<double>(m.successes));

    ExperimentConfig eval = train;
    eval.learning = false;
    eval.eval_epsilon = 0.0;
    eval.episodes = eval_episodes;
    eval.seed = derive_seed(c.seed, 0x6576616cULL);
    eval.checkpoint.reset();
    auto mean_successes = [](const ExperimentResult& r) {
        double sum = 0.0;
        for (const auto& m : r.trials.front().episodes)
            sum += static_cast<double>(m.successes);
        return sum / static_cast<double>(r.trials.front().episodes.size());
    };
    RunOptions with = run;
    with.checkpoint = out.checkpoint;
    out.trained_eval_mean = mean_successes(run_experiment(eval, with));
    RunOptions without = run;
    without.checkpoint.reset();
    out.untrained_eval_mean = mean_successes(run_experiment(eval, without));
    return out;
}

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f)
        throw std::runtime_error("cannot write " + path.string());
    return f;
}

}  // namespace

nlohmann::json run_pretrain(const ExperimentConfig& c, PretrainTarget target, const std::filesystem::path& checkpoint,
                            const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    nlohmann::json summary;
    if (target == PretrainTarget::dnn_corrector) {
        const auto r = pretrain_corrector(c, c.seed);
        nn::write_checkpoint(checkpoint, nn::to_records(r.training.model.network()));
        auto curve = open_out(out_dir / "pretrain_curve.csv");
        curve << "epoch,train_mse\n";
        for (std::size_t e = 0; e < r.training.epoch_mse.size(); ++e)
            curve << fmt::format("{},{}\n", e, r.training.epoch_mse[e]);
        summary = {{"target", "dnn_corrector"},
                   {"train_pairs", r.train_pairs},
                   {"holdout_pairs", r.holdout_pairs},
                   {"final_train_mse", r.training.final_mse},
                   {"holdout_mae", r.holdout_mae},
                   {"holdout_mom_full_mae", r.holdout_mom_full_mae}};
    } else {
        const auto r = pretrain_agent(c);
        nn::write_checkpoint(checkpoint, r.checkpoint);
        auto curve = open_out(out_dir / "pretrain_curve.csv");
        curve << "episode,successes\n";
        for (std::size_t e = 0; e < r.curve.size(); ++e)
            curve << fmt::format("{},{}\n", e, r.curve[e]);
        summary = {{"target", "dqn_agent"},
                   {"optimizer", to_string(c.optimizer)},
                   {"episodes", r.curve.size()},
                   {"trained_eval_mean_successes", r.trained_eval_mean},
                   {"untrained_eval_mean_successes", r.untrained_eval_mean},
                   {"margin", r.trained_eval_mean - r.untrained_eval_mean}};
    }
    summary["checkpoint"] = checkpoint.string();
    auto f = open_out(out_dir / "pretrain_summary.json");
    f << summary.dump(2) << '\n';
    return summary;
}

}  // namespace rach
