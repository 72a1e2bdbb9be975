#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "pairplan/metrics/metrics.hpp"
#include "pairplan/nn/nn.hpp"
#include "pairplan/scene/features.hpp"
#include "pairplan/tree/sampler.hpp"

namespace pairplan::rwm {

struct RwmOutput {
    double reward = 0.5;      // in [0,1], sigmoid-squashed
    double confidence = 0.5;  // in [0,1], sigmoid-squashed
};

struct RwmConfig {
    int feature_dim = scene::kFeatureDim;
    int hidden = 128;
    int horizon_steps = 8;
    int num_commands = core::kNumCommands;
    double coord_scale = 50.0;  // trajectory coordinate normalization
    double lr = 1e-3;
    int epochs = 60;
    int conf_epochs = 30;
    int batch = 64;
    int samples_per_scenario = 12;
    double holdout_fraction = 0.2;

    int input_dim() const {
        return feature_dim + num_commands + 3 * (horizon_steps + 1);
    }
};

struct RwmCheckpoint {
    nn::ParameterSet params;
    RwmConfig config;
    std::uint64_t seed = 0;
    std::uint64_t steps = 0;
    double holdout_mae = 0.0;  // reward MAE on the held-out fold after training
};

nn::Manifest rwm_manifest(const RwmConfig& config);
RwmCheckpoint rwm_init(const RwmConfig& config, std::uint64_t seed);

void save_rwm(const std::string& path, const RwmCheckpoint& ckpt);
RwmCheckpoint load_rwm(const std::string& path);

// Deterministic learned scorer: (F_BEV, command, trajectory) -> (r, conf).
RwmOutput rwm_forward(const RwmCheckpoint& ckpt, const scene::SceneFeatures& features,
                      core::DrivingCommand command, const core::Trajectory& trajectory);

// Regression of reward to simulated PDMS over sampler-generated trajectories;
// the confidence head is fit to 1 - |prediction error| on a held-out fold.
RwmCheckpoint train_rwm(const std::vector<sim::Scenario>& suite,
                        const tree::SamplerCheckpoint& sampler,
                        const RwmConfig& config, const sim::SimConfig& sim_config,
                        const metrics::MetricsConfig& metrics_config,
                        std::uint64_t seed);

enum class SelectPolicy : int { kReward = 0, kConfidenceWeighted = 1 };

// Drops candidates predicted worse than the IL trajectory, then picks the
// argmax (reward, or reward*confidence under the confidence_weighted policy).
// Ties prefer the IL trajectory, then the lowest candidate index.
core::Trajectory select_plan(
    const core::Trajectory& il_traj,
    const std::vector<std::pair<core::Trajectory, RwmOutput>>& candidates,
    const RwmOutput& il_score, SelectPolicy policy = SelectPolicy::kReward);

using PlanScorer = std::function<double(const core::Trajectory&)>;

// argmax of scorer over n >= 1 plans; ties keep the lowest index.
core::Trajectory best_of_n(const std::vector<core::Trajectory>& plans,
                           const PlanScorer& scorer);

}  // namespace pairplan::rwm
