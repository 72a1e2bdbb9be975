#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "pairplan/core/types.hpp"
#include "pairplan/nn/nn.hpp"
#include "pairplan/util/rng.hpp"

namespace pairplan::tree {

using Features = std::vector<double>;

struct OffsetBoundsConfig {
    double keep_halfwidth = 0.2;      // along/lateral band around the reference step
    double keep_dh_halfwidth = 0.05;  // heading band around the reference step
    double dy_max = 1.0;              // lateral reach per step for left/right
    double dh_max = 0.15;             // heading reach per step for left/right
    double dx_acc = 0.75;             // along-track reach for accelerate/decelerate
    double along_cap_factor = 1.2;    // along-track offsets live in [0, f*v_max*dt]
    double min_halfwidth = 1e-3;
    double logstd_floor = std::log(0.02);
};

// Axis-aligned box in the reference-step frame (along-track, lateral, heading).
struct OffsetBox {
    double center[3] = {0, 0, 0};
    double half[3] = {0, 0, 0};
};

// Per-step displacement of the reference trajectory and its local frame.
struct ReferenceStep {
    double dx = 0.0;       // world displacement
    double dy = 0.0;
    double along = 0.0;    // displacement length
    double dh = 0.0;       // heading change
    double frame_h = 0.0;  // rotation from the step-local frame to the world
};

ReferenceStep reference_step(const core::Trajectory& reference, int step);

OffsetBox intention_box(core::Intention intention, const ReferenceStep& ref,
                        const OffsetBoundsConfig& cfg, double v_max, double dt);

struct SamplerConfig {
    int token_dim = 128;
    int heads = 4;
    int context_tokens = 2;
    int feature_dim = 256;
    int horizon_steps = 8;  // must be even (stride-2 expansion stages)
    double dt = 0.5;
    double v_max = 15.0;
    int num_intentions = core::kNumIntentions;
    OffsetBoundsConfig bounds;
    double init_logstd = std::log(0.3);

    int stages() const { return horizon_steps / 2; }
};

struct SamplerCheckpoint {
    nn::ParameterSet params;
    SamplerConfig config;
    std::uint64_t seed = 0;
    std::uint64_t steps = 0;
};

nn::Manifest sampler_manifest(const SamplerConfig& config);
SamplerCheckpoint sampler_init(const SamplerConfig& config, std::uint64_t seed);

void save_sampler(const std::string& path, const SamplerCheckpoint& ckpt);
SamplerCheckpoint load_sampler(const std::string& path);

// One scenario-level planning context: scene features plus the reference
// trajectory the tree expands around (expert in training, IL at inference).
struct SamplerContext {
    Features features;
    core::Trajectory reference;
};

struct IntentionPrediction {
    double raw_mean[6] = {0, 0, 0, 0, 0, 0};  // pre-squash, 2 steps x 3 comps
    double logstd[3] = {0, 0, 0};             // floored, shared across the stage
    double log_prior = 0.0;                   // log softmax over intentions
    core::OffsetStep mean_offset[2];          // squashed means, world frame
};

// Forward caches needed to backprop one sampler evaluation.
struct StepCache {
    nn::LayerCache emb, enc, ctxproj, selfatt, crossatt, offhead, scorehead;
    nn::Mat tokens_in;
    nn::Mat x_cat;
    nn::Mat ctx;
    nn::Mat intent_rows;
    nn::Mat features_row;
    std::vector<double> priors;  // softmax over intentions
    int branch_depth = 0;
};

// Per-intention offset distributions for expanding one branch whose tip is at
// depth `branch.size()-1`.
std::vector<IntentionPrediction> sampler_step(const SamplerCheckpoint& ckpt,
                                              const std::vector<core::Waypoint>& branch,
                                              const SamplerContext& ctx,
                                              StepCache* cache = nullptr);

// Backprop through one sampler_step: d_raw is N x 6 (offset-head gradient),
// d_log_prior has length N. Accumulates into grads.
void sampler_step_backward(const SamplerCheckpoint& ckpt, const StepCache& cache,
                           const nn::Mat& d_raw, const std::vector<double>& d_log_prior,
                           nn::GradientSet& grads);

enum class ExpandMode : int { kSample = 0, kGreedyMean = 1 };

struct StageConfig {
    ExpandMode mode = ExpandMode::kSample;
    util::Rng* rng = nullptr;          // required for kSample
    int reference_leaf = -1;           // leaf whose keep-child stays noise-free
};

// Node-level sampling record kept outside the tree structure.
struct NodeDraw {
    core::OffsetStep offset;  // world frame, as applied
    double z[3] = {0, 0, 0};  // pre-squash coordinates
};

struct Expansion {
    std::vector<std::pair<int, NodeDraw>> draws;  // per created node
    int reference_leaf = -1;                      // updated keep-chain tip
};

// Expands every leaf (all at equal depth t, t+2 <= T) by N intentions, two
// chained offset steps each; returns the per-node draws.
Expansion expand_tree(const SamplerCheckpoint& ckpt, core::TrajectoryTree& tree,
                      const SamplerContext& ctx, const StageConfig& stage);

// Top-k leaf pruning by value; thin wrapper over the tree op so callers can
// protect the reference branch by assigning it +infinity.
void prune(core::TrajectoryTree& tree, int keep_k,
           const std::vector<std::pair<int, double>>& leaf_values);

struct GroupMember {
    core::Trajectory trajectory;
    std::vector<core::OffsetStep> offsets;  // length T
    std::vector<double> z;                  // length 3T
    std::vector<int> intention_path;        // length T/2
    double log_prob = 0.0;
    bool is_reference = false;
};

struct GroupSample {
    std::string scenario_id;
    std::vector<GroupMember> members;
    std::vector<double> rewards;
    std::vector<double> old_log_probs;
    std::vector<double> advantages;
    bool degenerate = false;
};

// Scores a partial-rollout prefix (completed by repeating the last step) for
// stage pruning; injected by the trainer (simulator PDMS) or the pipeline
// (reward world model).
using PruneScorer = std::function<double(const core::Trajectory&)>;

core::Trajectory complete_prefix(const std::vector<core::Waypoint>& prefix,
                                 int horizon_steps, double dt);

// Staged expand/prune to depth T with stage keep_k = G; returns exactly G
// members in sampling mode, the all-keep zero-noise reference first. Greedy
// mode deduplicates identical mean trajectories and may return fewer.
std::vector<GroupMember> sample_group(const SamplerCheckpoint& ckpt,
                                      const SamplerContext& ctx, int group_size,
                                      std::uint64_t seed, ExpandMode mode,
                                      const PruneScorer& prune_scorer);

struct LogProbEvalStage {
    StepCache cache;
    int intention = 0;
    double z[6] = {0, 0, 0, 0, 0, 0};
    double mean[6] = {0, 0, 0, 0, 0, 0};
    double sigma[3] = {0, 0, 0};
    bool logstd_floored[3] = {false, false, false};
};

struct LogProbEval {
    double log_prob = 0.0;
    bool clamped = false;  // offsets were outside their boxes (inverse clamped)
    std::vector<LogProbEvalStage> stages;
};

// Trajectory log-density under the checkpoint's current parameters, following
// the member's recorded intention path. Differentiable via
// backprop_log_prob. Offsets that cannot be reproduced inside their boxes are
// evaluated with a boundary-clamped inverse squash and flagged.
LogProbEval eval_log_prob(const SamplerCheckpoint& ckpt, const SamplerContext& ctx,
                          const GroupMember& member);

double traj_log_prob(const SamplerCheckpoint& ckpt, const SamplerContext& ctx,
                     const GroupMember& member);

// Accumulates upstream * d(log_prob)/d(params) into grads.
void backprop_log_prob(const SamplerCheckpoint& ckpt, const LogProbEval& eval,
                       double upstream, nn::GradientSet& grads);

}  // namespace pairplan::tree
