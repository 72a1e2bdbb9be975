#include "pairplan/rwm/rwm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "pairplan/nn/adamw.hpp"
#include "pairplan/nn/checkpoint.hpp"
#include "pairplan/util/errors.hpp"
#include "pairplan/util/parallel.hpp"
#include "pairplan/util/rng.hpp"

namespace pairplan::rwm {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

nn::Mat rwm_input(const RwmConfig& cfg, const scene::SceneFeatures& features,
                  core::DrivingCommand command, const core::Trajectory& trajectory) {
    if (static_cast<int>(features.size()) != cfg.feature_dim)
        throw ShapeError("rwm feature dim mismatch");
    if (trajectory.horizon() != cfg.horizon_steps)
        throw ShapeError("rwm trajectory horizon mismatch");
    nn::Mat x = nn::Mat::Zero(1, cfg.input_dim());
    int col = 0;
    for (int i = 0; i < cfg.feature_dim; ++i)
        x(0, col++) = features[static_cast<std::size_t>(i)];
    for (int c = 0; c < cfg.num_commands; ++c)
        x(0, col++) = c == static_cast<int>(command) ? 1.0 : 0.0;
    for (const auto& p : trajectory.points) {
        x(0, col++) = p.x / cfg.coord_scale;
        x(0, col++) = p.y / cfg.coord_scale;
        x(0, col++) = p.h;
    }
    return x;
}

struct Example {
    nn::Mat input;
    double label = 0.0;
    bool holdout = false;
};

}  // namespace

nn::Manifest rwm_manifest(const RwmConfig& cfg) {
    nn::Manifest m;
    m.layers = {nn::dense(cfg.input_dim(), cfg.hidden, nn::Activation::kGelu),
                nn::dense(cfg.hidden, cfg.hidden, nn::Activation::kGelu),
                nn::dense(cfg.hidden, 2)};
    return m;
}

RwmCheckpoint rwm_init(const RwmConfig& cfg, std::uint64_t seed) {
    RwmCheckpoint ckpt;
    ckpt.config = cfg;
    ckpt.seed = seed;
    ckpt.params = nn::init_params(rwm_manifest(cfg), util::derive_seed(seed, 0x41));
    return ckpt;
}

RwmOutput rwm_forward(const RwmCheckpoint& ckpt, const scene::SceneFeatures& features,
                      core::DrivingCommand command, const core::Trajectory& trajectory) {
    const nn::Mat x = rwm_input(ckpt.config, features, command, trajectory);
    nn::StackCache cache;
    const nn::Mat out = nn::forward(ckpt.params, x, cache);
    return RwmOutput{sigmoid(out(0, 0)), sigmoid(out(0, 1))};
}

RwmCheckpoint train_rwm(const std::vector<sim::Scenario>& suite,
                        const tree::SamplerCheckpoint& sampler, const RwmConfig& cfg,
                        const sim::SimConfig& sim_config,
                        const metrics::MetricsConfig& metrics_config,
                        std::uint64_t seed) {
    if (suite.empty()) throw ConfigError("train_rwm: empty scenario suite");

    const std::size_t n = suite.size();
    const std::size_t holdout_every = std::max<std::size_t>(
        2, static_cast<std::size_t>(std::llround(1.0 / std::max(0.05, cfg.holdout_fraction))));

    // dataset: stored expert + sampler-explored trajectories, labeled by
    // simulated PDMS against the clean-expert reference progress
    std::vector<std::vector<Example>> per_scenario(n);
    util::parallel_for(n, [&](std::size_t i) {
        const sim::Scenario& scenario = suite[i];
        const scene::SceneFeatures features = scene::encode_scene(scenario);
        const core::Trajectory clean =
            sim::synthesize_expert(scenario, sim::Corruption::kNone, sim_config);
        const double ref_progress = sim::rollout(scenario, clean, sim_config).progress;

        const auto label_of = [&](const core::Trajectory& traj) {
            const sim::SimulationTrace trace = sim::rollout(scenario, traj, sim_config);
            return metrics::pdms(
                metrics::subscores(trace, scenario, ref_progress, metrics_config).base);
        };

        tree::SamplerContext ctx;
        ctx.features = features;
        ctx.reference = scenario.expert;
        tree::PruneScorer scorer = label_of;

        std::vector<tree::GroupMember> members = tree::sample_group(
            sampler, ctx, std::max(2, cfg.samples_per_scenario),
            util::derive_seed(seed, 0x5000 + i), tree::ExpandMode::kSample, scorer);

        const bool holdout = (i % holdout_every) == holdout_every - 1;
        auto& bucket = per_scenario[i];
        bucket.push_back(Example{rwm_input(cfg, features, scenario.command,
                                           scenario.expert),
                                 label_of(scenario.expert), holdout});
        bucket.push_back(
            Example{rwm_input(cfg, features, scenario.command, clean), label_of(clean),
                    holdout});
        for (const auto& member : members)
            bucket.push_back(Example{rwm_input(cfg, features, scenario.command,
                                               member.trajectory),
                                     label_of(member.trajectory), holdout});
    });

    std::vector<Example> train_set, holdout_set;
    for (auto& bucket : per_scenario) {
        for (auto& ex : bucket) {
            if (ex.holdout) holdout_set.push_back(std::move(ex));
            else train_set.push_back(std::move(ex));
        }
    }
    if (train_set.empty() || holdout_set.empty())
        throw ConfigError("train_rwm: suite too small to split train/holdout folds");

    RwmCheckpoint ckpt = rwm_init(cfg, seed);
    nn::AdamWConfig opt_cfg;
    opt_cfg.lr = cfg.lr;
    nn::AdamWState opt = nn::AdamWState::create(opt_cfg, ckpt.params.values.size());
    util::Rng shuffle_rng(util::derive_seed(seed, 0x42));

    // phase 1: reward regression on the training fold
    const auto run_epoch = [&](std::vector<Example>& data, int out_slot,
                               const std::function<double(const Example&)>& target) {
        std::vector<std::size_t> order(data.size());
        std::iota(order.begin(), order.end(), 0);
        for (std::size_t i = 0; i < order.size(); ++i) {
            const std::size_t j = i + shuffle_rng.next_u64() % (order.size() - i);
            std::swap(order[i], order[j]);
        }
        double loss_acc = 0.0;
        for (std::size_t base = 0; base < order.size();
             base += static_cast<std::size_t>(cfg.batch)) {
            const std::size_t end =
                std::min(order.size(), base + static_cast<std::size_t>(cfg.batch));
            nn::GradientSet grads(ckpt.params.values.size(), 0.0);
            for (std::size_t bi = base; bi < end; ++bi) {
                const Example& ex = data[order[bi]];
                nn::StackCache cache;
                const nn::Mat raw = nn::forward(ckpt.params, ex.input, cache);
                const double pred = sigmoid(raw(0, out_slot));
                const double err = pred - target(ex);
                loss_acc += err * err;
                nn::Mat draw = nn::Mat::Zero(1, 2);
                draw(0, out_slot) = 2.0 * err * pred * (1.0 - pred) /
                                    static_cast<double>(end - base);
                nn::backward(ckpt.params, cache, draw, grads);
            }
            nn::adamw_step(ckpt.params, grads, opt);
            ckpt.steps += 1;
        }
        return loss_acc / static_cast<double>(data.size());
    };

    for (int epoch = 0; epoch < cfg.epochs; ++epoch)
        run_epoch(train_set, 0, [](const Example& ex) { return ex.label; });

    // phase 2: confidence targets 1 - |reward error| from the held-out fold
    std::vector<double> conf_targets(holdout_set.size(), 0.0);
    double mae = 0.0;
    for (std::size_t i = 0; i < holdout_set.size(); ++i) {
        nn::StackCache cache;
        const nn::Mat raw = nn::forward(ckpt.params, holdout_set[i].input, cache);
        const double err = std::abs(sigmoid(raw(0, 0)) - holdout_set[i].label);
        conf_targets[i] = std::clamp(1.0 - err, 0.0, 1.0);
        mae += err;
    }
    ckpt.holdout_mae = mae / static_cast<double>(holdout_set.size());

    std::vector<Example> conf_set = holdout_set;
    for (std::size_t i = 0; i < conf_set.size(); ++i) conf_set[i].label = conf_targets[i];
    for (int epoch = 0; epoch < cfg.conf_epochs; ++epoch)
        run_epoch(conf_set, 1, [](const Example& ex) { return ex.label; });

    return ckpt;
}

core::Trajectory select_plan(
    const core::Trajectory& il_traj,
    const std::vector<std::pair<core::Trajectory, RwmOutput>>& candidates,
    const RwmOutput& il_score, SelectPolicy policy) {
    const auto key = [&](const RwmOutput& out) {
        return policy == SelectPolicy::kConfidenceWeighted ? out.reward * out.confidence
                                                           : out.reward;
    };
    double best_key = key(il_score);
    const core::Trajectory* best = &il_traj;
    for (const auto& [traj, score] : candidates) {
        if (score.reward < il_score.reward) continue;  // worse than IL: filtered
        if (key(score) > best_key) {
            best_key = key(score);
            best = &traj;
        }
    }
    return *best;
}

core::Trajectory best_of_n(const std::vector<core::Trajectory>& plans,
                           const PlanScorer& scorer) {
    if (plans.empty()) throw ConfigError("best_of_n: empty plan list");
    std::size_t best = 0;
    double best_score = scorer(plans[0]);
    for (std::size_t i = 1; i < plans.size(); ++i) {
        const double s = scorer(plans[i]);
        if (s > best_score) {
            best_score = s;
            best = i;
        }
    }
    return plans[best];
}

void save_rwm(const std::string& path, const RwmCheckpoint& ckpt) {
    nlohmann::ordered_json meta;
    meta["manifest"] = nlohmann::json::parse(ckpt.params.manifest.to_json());
    meta["feature_dim"] = ckpt.config.feature_dim;
    meta["hidden"] = ckpt.config.hidden;
    meta["horizon_steps"] = ckpt.config.horizon_steps;
    meta["num_commands"] = ckpt.config.num_commands;
    meta["coord_scale"] = ckpt.config.coord_scale;
    meta["lr"] = ckpt.config.lr;
    meta["epochs"] = ckpt.config.epochs;
    meta["conf_epochs"] = ckpt.config.conf_epochs;
    meta["batch"] = ckpt.config.batch;
    meta["samples_per_scenario"] = ckpt.config.samples_per_scenario;
    meta["holdout_fraction"] = ckpt.config.holdout_fraction;
    meta["holdout_mae"] = ckpt.holdout_mae;

    nn::CheckpointData data;
    data.role = "rwm";
    data.rng_seed = ckpt.seed;
    data.step_count = ckpt.steps;
    data.meta_json = meta.dump();
    data.params = ckpt.params.values;
    nn::save_checkpoint_file(path, data);
}

RwmCheckpoint load_rwm(const std::string& path) {
    const nn::CheckpointData data = nn::load_checkpoint_file(path);
    if (data.role != "rwm")
        throw FormatError("checkpoint role mismatch: expected 'rwm', found '" +
                          data.role + "'");
    const auto meta = nlohmann::json::parse(data.meta_json);
    RwmCheckpoint ckpt;
    ckpt.config.feature_dim = meta.at("feature_dim");
    ckpt.config.hidden = meta.at("hidden");
    ckpt.config.horizon_steps = meta.at("horizon_steps");
    ckpt.config.num_commands = meta.at("num_commands");
    ckpt.config.coord_scale = meta.at("coord_scale");
    ckpt.config.lr = meta.at("lr");
    ckpt.config.epochs = meta.at("epochs");
    ckpt.config.conf_epochs = meta.at("conf_epochs");
    ckpt.config.batch = meta.at("batch");
    ckpt.config.samples_per_scenario = meta.at("samples_per_scenario");
    ckpt.config.holdout_fraction = meta.at("holdout_fraction");
    ckpt.holdout_mae = meta.at("holdout_mae");
    ckpt.seed = data.rng_seed;
    ckpt.steps = data.step_count;
    ckpt.params.manifest = nn::Manifest::from_json(meta.at("manifest").dump());
    ckpt.params.values = data.params;
    if (ckpt.params.values.size() != ckpt.params.manifest.total_params())
        throw FormatError("rwm checkpoint parameter count mismatch");
    return ckpt;
}

}  // namespace pairplan::rwm
