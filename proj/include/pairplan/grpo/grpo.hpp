#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pairplan/metrics/metrics.hpp"
#include "pairplan/nn/adamw.hpp"
#include "pairplan/tree/sampler.hpp"

namespace pairplan::grpo {

struct GrpoConfig {
    int group_size = 15;
    double clip_epsilon = 0.2;
    double beta_init = 0.1;
    double kl_target = 0.01;
    double beta_min = 1e-4;
    double beta_max = 10.0;
    int updates = 150;
    int scenarios_per_update = 4;
    int epochs_per_update = 2;
    double lr = 5e-5;
    nn::LrSchedule schedule = nn::LrSchedule::kCosine;
    double lr_final = 0.0;
};

// A_i = (r_i - mean) / population std; all zeros (and degenerate=true) when
// the reward spread is below 1e-8. Requires G >= 2.
std::vector<double> group_advantage(const std::vector<double>& rewards,
                                    bool* degenerate = nullptr);

// min(ratio*A, clip(ratio, 1-eps, 1+eps)*A); ratio must be positive.
double clipped_surrogate(double ratio, double advantage, double eps);

// d/d(log ratio) of the clipped surrogate: ratio*A on the unclipped branch,
// exactly zero once the clip saturates against the advantage direction.
double clipped_surrogate_grad(double ratio, double advantage, double eps);

// Mean of the non-negative pointwise estimator exp(old-new) - (old-new) - 1.
double kl_estimate(const std::vector<double>& new_lps,
                   const std::vector<double>& old_lps);

double update_beta(double beta, double measured_kl, double target_kl,
                   double beta_min = 1e-4, double beta_max = 10.0);

struct ObjectiveResult {
    double objective = 0.0;  // J_RL; gradients point in the ascent direction
    double kl = 0.0;
    double mean_ratio = 0.0;
    bool degenerate = false;
    nn::GradientSet gradients;
};

// Eq. 9 objective over one group under the current checkpoint; gradients flow
// through traj_log_prob into every sampler parameter.
ObjectiveResult grpo_objective(const tree::SamplerCheckpoint& ckpt,
                               const tree::SamplerContext& ctx,
                               const tree::GroupSample& group, double beta, double eps);

struct RlLogRow {
    int update = 0;
    double mean_reward = 0.0;
    double max_reward = 0.0;
    double kl = 0.0;
    double beta = 0.0;
    double objective = 0.0;
};

struct RlTrainResult {
    tree::SamplerCheckpoint checkpoint;
    std::vector<RlLogRow> log;
};

// GRPO training loop: snapshot -> sample groups -> simulate rewards ->
// advantage -> ascent -> beta adaptation. Roots every tree at the scenario's
// stored human demonstration; never touches IL state.
RlTrainResult train_rl(const std::vector<sim::Scenario>& suite,
                       const tree::SamplerConfig& sampler_config,
                       const GrpoConfig& config, const sim::SimConfig& sim_config,
                       const metrics::MetricsConfig& metrics_config,
                       std::uint64_t seed);

void write_rl_log_csv(const std::string& path, const std::vector<RlLogRow>& rows);

}  // namespace pairplan::grpo
