#include "pairplan/tree/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include <nlohmann/json.hpp>

#include "pairplan/nn/checkpoint.hpp"
#include "pairplan/util/errors.hpp"

namespace pairplan::tree {

namespace {

constexpr double kLn2Pi = 1.8378770664093454836;
constexpr double kZClamp = 20.0;
constexpr double kInf = std::numeric_limits<double>::infinity();

enum LayerIndex : std::size_t {
    kEmb = 0,
    kEnc = 1,
    kCtxProj = 2,
    kSelfAtt = 3,
    kCrossAtt = 4,
    kOffsetHead = 5,
    kScoreHead = 6,
    kLogStd = 7,
};

double stable_log_one_minus_tanh_sq(double z) {
    const double a = std::abs(z);
    return 2.0 * (std::log(2.0) - a - std::log1p(std::exp(-2.0 * a)));
}

double atanh_clamped(double u, bool& clamped) {
    const double lim = 1.0 - 1e-9;
    if (u > lim || u < -lim) {
        clamped = true;
        u = std::clamp(u, -lim, lim);
    }
    const double z = 0.5 * std::log((1.0 + u) / (1.0 - u));
    return std::clamp(z, -kZClamp, kZClamp);
}

struct LocalOffset {
    double along = 0.0;
    double lat = 0.0;
    double dh = 0.0;
};

// World offset as reference delta plus a rotated deviation, so a zero
// deviation reproduces the reference displacement bitwise.
core::OffsetStep to_world(const LocalOffset& local, const ReferenceStep& ref) {
    const double c = std::cos(ref.frame_h);
    const double s = std::sin(ref.frame_h);
    const double da = local.along - ref.along;
    return core::OffsetStep{ref.dx + c * da - s * local.lat,
                            ref.dy + s * da + c * local.lat, local.dh};
}

LocalOffset to_local(const core::OffsetStep& offset, const ReferenceStep& ref) {
    const double c = std::cos(ref.frame_h);
    const double s = std::sin(ref.frame_h);
    const double ddx = offset.dx - ref.dx;
    const double ddy = offset.dy - ref.dy;
    return LocalOffset{ref.along + c * ddx + s * ddy, -s * ddx + c * ddy, offset.dh};
}

// log N(z; m, sigma) with the tanh-squash change of variables into the box.
double squashed_log_density(double z, double m, double sigma, double logstd,
                            double half) {
    const double u = (z - m) / sigma;
    return -0.5 * kLn2Pi - logstd - 0.5 * u * u - std::log(half) -
           stable_log_one_minus_tanh_sq(z);
}

}  // namespace

ReferenceStep reference_step(const core::Trajectory& reference, int step) {
    if (step < 0 || step >= reference.horizon())
        throw ContractViolation("reference step index out of range");
    const auto& a = reference.points[static_cast<std::size_t>(step)];
    const auto& b = reference.points[static_cast<std::size_t>(step) + 1];
    ReferenceStep ref;
    ref.dx = b.x - a.x;
    ref.dy = b.y - a.y;
    ref.along = std::hypot(ref.dx, ref.dy);
    ref.dh = core::normalize_angle(b.h - a.h);
    ref.frame_h = ref.along > 1e-6 ? std::atan2(ref.dy, ref.dx) : a.h;
    return ref;
}

OffsetBox intention_box(core::Intention intention, const ReferenceStep& ref,
                        const OffsetBoundsConfig& cfg, double v_max, double dt) {
    OffsetBox box;
    // keep geometry: centered exactly on the reference step
    box.center[0] = ref.along;
    box.center[1] = 0.0;
    box.center[2] = ref.dh;
    box.half[0] = cfg.keep_halfwidth;
    box.half[1] = cfg.keep_halfwidth;
    box.half[2] = cfg.keep_dh_halfwidth;

    switch (intention) {
        case core::Intention::kKeep:
            break;
        case core::Intention::kLeft:
            box.center[1] = 0.5 * cfg.dy_max;
            box.half[1] = 0.5 * cfg.dy_max;
            box.center[2] = ref.dh + 0.5 * cfg.dh_max;
            box.half[2] = 0.5 * cfg.dh_max;
            break;
        case core::Intention::kRight:
            box.center[1] = -0.5 * cfg.dy_max;
            box.half[1] = 0.5 * cfg.dy_max;
            box.center[2] = ref.dh - 0.5 * cfg.dh_max;
            box.half[2] = 0.5 * cfg.dh_max;
            break;
        case core::Intention::kAccelerate:
            box.center[0] = ref.along + 0.5 * cfg.dx_acc;
            box.half[0] = 0.5 * cfg.dx_acc;
            break;
        case core::Intention::kDecelerate:
            box.center[0] = ref.along - 0.5 * cfg.dx_acc;
            box.half[0] = 0.5 * cfg.dx_acc;
            break;
    }

    // no reversing; keep the along-track box inside [0, cap]
    const double cap = cfg.along_cap_factor * v_max * dt;
    const double lo = box.center[0] - box.half[0];
    const double hi = box.center[0] + box.half[0];
    if (lo < 0.0 || hi > cap) {
        const double clo = std::clamp(lo, 0.0, cap);
        const double chi = std::clamp(hi, 0.0, cap);
        box.center[0] = 0.5 * (clo + chi);
        box.half[0] = 0.5 * (chi - clo);
    }
    for (double& h : box.half)
        if (h < cfg.min_halfwidth) h = cfg.min_halfwidth;
    return box;
}

nn::Manifest sampler_manifest(const SamplerConfig& cfg) {
    const int d = cfg.token_dim;
    nn::Manifest m;
    m.layers = {
        nn::embedding(cfg.num_intentions, d),
        nn::dense(5, d),
        nn::dense(cfg.feature_dim, cfg.context_tokens * d),
        nn::self_attention(d, cfg.heads),
        nn::cross_attention(d, d, cfg.heads),
        nn::dense(d, 6),
        nn::dense(d, 1),
        nn::embedding(cfg.num_intentions, 3),  // per-intention offset log-std
    };
    return m;
}

SamplerCheckpoint sampler_init(const SamplerConfig& cfg, std::uint64_t seed) {
    if (cfg.horizon_steps % 2 != 0)
        throw ConfigError("sampler horizon_steps must be even (stride-2 stages)");
    if (cfg.token_dim % cfg.heads != 0)
        throw ConfigError("sampler token_dim must be divisible by heads");
    SamplerCheckpoint ckpt;
    ckpt.config = cfg;
    ckpt.seed = seed;
    ckpt.params = nn::init_params(sampler_manifest(cfg), util::derive_seed(seed, 0x21));
    double* logstd = ckpt.params.layer_params(kLogStd);
    for (int i = 0; i < cfg.num_intentions * 3; ++i) logstd[i] = cfg.init_logstd;
    return ckpt;
}

std::vector<IntentionPrediction> sampler_step(const SamplerCheckpoint& ckpt,
                                              const std::vector<core::Waypoint>& branch,
                                              const SamplerContext& ctx,
                                              StepCache* cache) {
    const SamplerConfig& cfg = ckpt.config;
    const int T = cfg.horizon_steps;
    const int N = cfg.num_intentions;
    const int d = cfg.token_dim;
    if (branch.empty() || static_cast<int>(branch.size()) > T + 1)
        throw ContractViolation("sampler branch length out of range");
    if (static_cast<int>(ctx.features.size()) != cfg.feature_dim)
        throw ShapeError("sampler feature dim mismatch");
    const int depth = static_cast<int>(branch.size()) - 1;

    StepCache local_cache;
    StepCache& c = cache != nullptr ? *cache : local_cache;
    c.branch_depth = depth;

    // trajectory tokens: observed prefix in the reference-root frame
    const core::Waypoint root = ctx.reference.points.front();
    c.tokens_in.setZero(T + 1, 5);
    for (int t = 0; t <= T; ++t) {
        if (t <= depth) {
            const core::Waypoint local =
                core::to_ego_frame(branch[static_cast<std::size_t>(t)], root);
            c.tokens_in(t, 0) = local.x / 10.0;
            c.tokens_in(t, 1) = local.y / 10.0;
            c.tokens_in(t, 2) = local.h;
            c.tokens_in(t, 3) = 1.0;
        }
        c.tokens_in(t, 4) = static_cast<double>(t) / static_cast<double>(T);
    }

    const auto& manifest = ckpt.params.manifest;
    const nn::Mat traj_tokens = nn::layer_forward(
        manifest.layers[kEnc], ckpt.params.layer_params(kEnc), c.tokens_in, nullptr, c.enc);
    const nn::Mat dummy = nn::Mat::Zero(1, 1);
    const nn::Mat intent_tokens = nn::layer_forward(
        manifest.layers[kEmb], ckpt.params.layer_params(kEmb), dummy, nullptr, c.emb);

    c.features_row.resize(1, cfg.feature_dim);
    for (int i = 0; i < cfg.feature_dim; ++i)
        c.features_row(0, i) = ctx.features[static_cast<std::size_t>(i)];
    const nn::Mat ctx_flat =
        nn::layer_forward(manifest.layers[kCtxProj], ckpt.params.layer_params(kCtxProj),
                          c.features_row, nullptr, c.ctxproj);
    c.ctx.resize(cfg.context_tokens, d);
    for (int k = 0; k < cfg.context_tokens; ++k)
        for (int j = 0; j < d; ++j) c.ctx(k, j) = ctx_flat(0, k * d + j);

    c.x_cat.resize(T + 1 + N, d);
    c.x_cat.topRows(T + 1) = traj_tokens;
    c.x_cat.bottomRows(N) = intent_tokens;

    const nn::Mat x_self =
        nn::layer_forward(manifest.layers[kSelfAtt], ckpt.params.layer_params(kSelfAtt),
                          c.x_cat, nullptr, c.selfatt);
    const nn::Mat x_cross =
        nn::layer_forward(manifest.layers[kCrossAtt], ckpt.params.layer_params(kCrossAtt),
                          x_self, &c.ctx, c.crossatt);

    c.intent_rows = x_cross.bottomRows(N);
    const nn::Mat raw =
        nn::layer_forward(manifest.layers[kOffsetHead],
                          ckpt.params.layer_params(kOffsetHead), c.intent_rows, nullptr,
                          c.offhead);
    const nn::Mat logits =
        nn::layer_forward(manifest.layers[kScoreHead],
                          ckpt.params.layer_params(kScoreHead), c.intent_rows, nullptr,
                          c.scorehead);

    // log softmax over intentions
    double max_logit = -kInf;
    for (int n = 0; n < N; ++n) max_logit = std::max(max_logit, logits(n, 0));
    double sum = 0.0;
    for (int n = 0; n < N; ++n) sum += std::exp(logits(n, 0) - max_logit);
    const double log_z = max_logit + std::log(sum);
    c.priors.assign(static_cast<std::size_t>(N), 0.0);

    const double* logstd_raw = ckpt.params.layer_params(kLogStd);
    std::vector<IntentionPrediction> preds(static_cast<std::size_t>(N));
    for (int n = 0; n < N; ++n) {
        IntentionPrediction& p = preds[static_cast<std::size_t>(n)];
        for (int j = 0; j < 6; ++j) p.raw_mean[j] = raw(n, j);
        for (int comp = 0; comp < 3; ++comp)
            p.logstd[comp] =
                std::max(logstd_raw[n * 3 + comp], cfg.bounds.logstd_floor);
        p.log_prior = logits(n, 0) - log_z;
        c.priors[static_cast<std::size_t>(n)] = std::exp(p.log_prior);
        for (int k = 0; k < 2 && depth + k < T; ++k) {
            const ReferenceStep ref = reference_step(ctx.reference, depth + k);
            const OffsetBox box = intention_box(static_cast<core::Intention>(n), ref,
                                                cfg.bounds, cfg.v_max, cfg.dt);
            LocalOffset mean_local;
            mean_local.along = box.center[0] + box.half[0] * std::tanh(p.raw_mean[3 * k]);
            mean_local.lat =
                box.center[1] + box.half[1] * std::tanh(p.raw_mean[3 * k + 1]);
            mean_local.dh =
                box.center[2] + box.half[2] * std::tanh(p.raw_mean[3 * k + 2]);
            p.mean_offset[k] = to_world(mean_local, ref);
        }
    }
    return preds;
}

void sampler_step_backward(const SamplerCheckpoint& ckpt, const StepCache& c,
                           const nn::Mat& d_raw, const std::vector<double>& d_log_prior,
                           nn::GradientSet& grads) {
    const SamplerConfig& cfg = ckpt.config;
    const int T = cfg.horizon_steps;
    const int N = cfg.num_intentions;
    const int d = cfg.token_dim;
    const auto& manifest = ckpt.params.manifest;
    if (grads.size() != ckpt.params.values.size())
        grads.assign(ckpt.params.values.size(), 0.0);

    // log-softmax backward for the intention priors
    double upstream_sum = 0.0;
    for (double g : d_log_prior) upstream_sum += g;
    nn::Mat d_logits(N, 1);
    for (int n = 0; n < N; ++n)
        d_logits(n, 0) = d_log_prior[static_cast<std::size_t>(n)] -
                         c.priors[static_cast<std::size_t>(n)] * upstream_sum;

    nn::Mat d_intent = nn::Mat::Zero(N, d);
    d_intent += nn::layer_backward(manifest.layers[kScoreHead],
                                   ckpt.params.layer_params(kScoreHead), c.scorehead,
                                   d_logits, grads.data() + manifest.offset_of(kScoreHead),
                                   nullptr);
    d_intent += nn::layer_backward(manifest.layers[kOffsetHead],
                                   ckpt.params.layer_params(kOffsetHead), c.offhead,
                                   d_raw, grads.data() + manifest.offset_of(kOffsetHead),
                                   nullptr);

    nn::Mat d_cross = nn::Mat::Zero(T + 1 + N, d);
    d_cross.bottomRows(N) = d_intent;

    nn::Mat d_ctx = nn::Mat::Zero(cfg.context_tokens, d);
    const nn::Mat d_self = nn::layer_backward(
        manifest.layers[kCrossAtt], ckpt.params.layer_params(kCrossAtt), c.crossatt,
        d_cross, grads.data() + manifest.offset_of(kCrossAtt), &d_ctx);

    nn::Mat d_ctx_flat(1, cfg.context_tokens * d);
    for (int k = 0; k < cfg.context_tokens; ++k)
        for (int j = 0; j < d; ++j) d_ctx_flat(0, k * d + j) = d_ctx(k, j);
    nn::layer_backward(manifest.layers[kCtxProj], ckpt.params.layer_params(kCtxProj),
                       c.ctxproj, d_ctx_flat, grads.data() + manifest.offset_of(kCtxProj),
                       nullptr);

    const nn::Mat d_cat = nn::layer_backward(
        manifest.layers[kSelfAtt], ckpt.params.layer_params(kSelfAtt), c.selfatt, d_self,
        grads.data() + manifest.offset_of(kSelfAtt), nullptr);

    nn::layer_backward(manifest.layers[kEnc], ckpt.params.layer_params(kEnc), c.enc,
                       d_cat.topRows(T + 1), grads.data() + manifest.offset_of(kEnc),
                       nullptr);
    nn::layer_backward(manifest.layers[kEmb], ckpt.params.layer_params(kEmb), c.emb,
                       d_cat.bottomRows(N), grads.data() + manifest.offset_of(kEmb),
                       nullptr);
}

Expansion expand_tree(const SamplerCheckpoint& ckpt, core::TrajectoryTree& tree,
                      const SamplerContext& ctx, const StageConfig& stage) {
    const SamplerConfig& cfg = ckpt.config;
    const int T = cfg.horizon_steps;
    const int N = cfg.num_intentions;
    if (stage.mode == ExpandMode::kSample && stage.rng == nullptr)
        throw ContractViolation("sampling expansion requires an rng");

    const std::vector<int> leaves = tree.leaf_ids();
    const int depth = tree.leaf_depth();
    if (depth + 2 > T)
        throw ContractViolation("expansion would exceed the planning horizon");

    Expansion result;
    result.reference_leaf = stage.reference_leaf;

    for (int leaf : leaves) {
        const std::vector<core::Waypoint> branch = tree.path_to(leaf);
        const auto preds = sampler_step(ckpt, branch, ctx, nullptr);
        const double parent_lp = tree.node(leaf).cum_log_prob;
        const bool is_ref_leaf = leaf == stage.reference_leaf;

        for (int n = 0; n < N; ++n) {
            const IntentionPrediction& p = preds[static_cast<std::size_t>(n)];
            const bool zero_noise =
                stage.mode == ExpandMode::kGreedyMean ||
                (is_ref_leaf && n == static_cast<int>(core::Intention::kKeep));

            core::Waypoint wp = branch.back();
            double lp = parent_lp + p.log_prior;
            int parent_id = leaf;
            for (int k = 0; k < 2; ++k) {
                const ReferenceStep ref = reference_step(ctx.reference, depth + k);
                const OffsetBox box = intention_box(static_cast<core::Intention>(n), ref,
                                                    cfg.bounds, cfg.v_max, cfg.dt);
                NodeDraw draw;
                LocalOffset local;
                for (int comp = 0; comp < 3; ++comp) {
                    const double m = p.raw_mean[3 * k + comp];
                    const double sigma = std::exp(p.logstd[comp]);
                    const double z =
                        zero_noise ? m : stage.rng->normal(m, sigma);
                    draw.z[comp] = z;
                    const double v = box.center[comp] + box.half[comp] * std::tanh(z);
                    if (comp == 0) local.along = v;
                    else if (comp == 1) local.lat = v;
                    else local.dh = v;
                    lp += squashed_log_density(z, m, sigma, p.logstd[comp],
                                               box.half[comp]);
                }
                draw.offset = to_world(local, ref);
                wp.x += draw.offset.dx;
                wp.y += draw.offset.dy;
                wp.h = core::normalize_angle(wp.h + draw.offset.dh);
                parent_id = tree.add_node(parent_id, wp, n, lp);
                result.draws.emplace_back(parent_id, draw);
            }
            if (is_ref_leaf && n == static_cast<int>(core::Intention::kKeep))
                result.reference_leaf = parent_id;
        }
    }
    return result;
}

void prune(core::TrajectoryTree& tree, int keep_k,
           const std::vector<std::pair<int, double>>& leaf_values) {
    tree.prune_leaves(leaf_values, keep_k);
}

core::Trajectory complete_prefix(const std::vector<core::Waypoint>& prefix,
                                 int horizon_steps, double dt) {
    if (prefix.empty()) throw ContractViolation("empty prefix");
    core::Trajectory traj;
    traj.dt = dt;
    traj.points = prefix;
    double dx = 0.0, dy = 0.0;
    if (prefix.size() >= 2) {
        dx = prefix.back().x - prefix[prefix.size() - 2].x;
        dy = prefix.back().y - prefix[prefix.size() - 2].y;
    }
    while (static_cast<int>(traj.points.size()) < horizon_steps + 1) {
        core::Waypoint next = traj.points.back();
        next.x += dx;
        next.y += dy;
        traj.points.push_back(next);
    }
    return traj;
}

std::vector<GroupMember> sample_group(const SamplerCheckpoint& ckpt,
                                      const SamplerContext& ctx, int group_size,
                                      std::uint64_t seed, ExpandMode mode,
                                      const PruneScorer& prune_scorer) {
    const SamplerConfig& cfg = ckpt.config;
    const int T = cfg.horizon_steps;
    const int stages = cfg.stages();
    if (mode == ExpandMode::kSample && group_size < 2)
        throw ConfigError("sample_group requires G >= 2");
    double achievable = 1.0;
    for (int s = 0; s < stages; ++s)
        achievable = std::min<double>(achievable * cfg.num_intentions, 1e9);
    if (static_cast<double>(group_size) > achievable)
        throw ConfigError("group size exceeds achievable tree leaves");
    if (static_cast<int>(ctx.reference.points.size()) != T + 1)
        throw ConfigError("reference trajectory horizon differs from sampler config");

    util::Rng rng(util::derive_seed(seed, 0x7265));
    core::Waypoint root = ctx.reference.points.front();
    root.h = core::normalize_angle(root.h);
    core::TrajectoryTree tree(root);
    std::map<int, NodeDraw> draws;
    int ref_leaf = 0;

    for (int s = 0; s < stages; ++s) {
        StageConfig stage;
        stage.mode = mode;
        stage.rng = &rng;
        stage.reference_leaf = ref_leaf;
        Expansion expansion = expand_tree(ckpt, tree, ctx, stage);
        for (auto& [id, draw] : expansion.draws) draws.emplace(id, draw);
        ref_leaf = expansion.reference_leaf;

        if (mode == ExpandMode::kSample) {
            const auto leaves = tree.leaf_ids();
            if (static_cast<int>(leaves.size()) > group_size) {
                std::vector<std::pair<int, double>> values;
                values.reserve(leaves.size());
                for (int leaf : leaves) {
                    double value;
                    if (leaf == ref_leaf) {
                        value = kInf;  // the reference branch is never pruned
                    } else {
                        const core::Trajectory probe =
                            complete_prefix(tree.path_to(leaf), T, cfg.dt);
                        value = prune_scorer ? prune_scorer(probe) : 0.0;
                    }
                    values.emplace_back(leaf, value);
                }
                prune(tree, group_size, values);
            }
        }
    }

    // extract members: reference first, then ascending leaf id
    std::vector<int> leaves = tree.leaf_ids();
    std::vector<int> ordered;
    if (mode == ExpandMode::kSample) {
        ordered.push_back(ref_leaf);
        for (int leaf : leaves)
            if (leaf != ref_leaf) ordered.push_back(leaf);
    } else {
        ordered = leaves;
    }

    std::vector<GroupMember> members;
    for (int leaf : ordered) {
        if (static_cast<int>(members.size()) >= group_size) break;
        GroupMember member;
        member.is_reference = mode == ExpandMode::kSample && leaf == ref_leaf;
        member.log_prob = tree.node(leaf).cum_log_prob;
        const std::vector<int> path = tree.node_path_to(leaf);
        for (std::size_t i = 1; i < path.size(); ++i) {
            const NodeDraw& draw = draws.at(path[i]);
            member.offsets.push_back(draw.offset);
            for (int comp = 0; comp < 3; ++comp) member.z.push_back(draw.z[comp]);
            if (i % 2 == 1)
                member.intention_path.push_back(tree.node(path[i]).intention);
        }
        member.trajectory = core::apply_offsets(root, member.offsets, cfg.dt);
        if (mode == ExpandMode::kGreedyMean) {
            bool duplicate = false;
            for (const auto& other : members)
                if (other.trajectory.points == member.trajectory.points) {
                    duplicate = true;
                    break;
                }
            if (duplicate) continue;
        }
        members.push_back(std::move(member));
    }

    if (mode == ExpandMode::kSample &&
        static_cast<int>(members.size()) != group_size)
        throw ConfigError("sample_group could not produce the requested group size");
    return members;
}

LogProbEval eval_log_prob(const SamplerCheckpoint& ckpt, const SamplerContext& ctx,
                          const GroupMember& member) {
    const SamplerConfig& cfg = ckpt.config;
    const int T = cfg.horizon_steps;
    const int stages = cfg.stages();
    if (static_cast<int>(member.trajectory.points.size()) != T + 1)
        throw ContractViolation("member trajectory horizon mismatch");
    if (static_cast<int>(member.intention_path.size()) != stages)
        throw ContractViolation("member intention path length mismatch");
    const bool have_z = member.z.size() == static_cast<std::size_t>(3 * T);
    const bool have_offsets =
        member.offsets.size() == static_cast<std::size_t>(T);
    if (!have_z && !have_offsets)
        throw ContractViolation("member carries neither z records nor offsets");

    LogProbEval eval;
    eval.stages.resize(static_cast<std::size_t>(stages));

    for (int s = 0; s < stages; ++s) {
        LogProbEvalStage& stage = eval.stages[static_cast<std::size_t>(s)];
        const int depth = 2 * s;
        const std::vector<core::Waypoint> branch(
            member.trajectory.points.begin(),
            member.trajectory.points.begin() + depth + 1);
        const auto preds = sampler_step(ckpt, branch, ctx, &stage.cache);
        const int intent = member.intention_path[static_cast<std::size_t>(s)];
        if (intent < 0 || intent >= cfg.num_intentions)
            throw ContractViolation("member intention out of range");
        stage.intention = intent;
        const IntentionPrediction& p = preds[static_cast<std::size_t>(intent)];
        eval.log_prob += p.log_prior;

        const double* logstd_raw = ckpt.params.layer_params(kLogStd);
        for (int comp = 0; comp < 3; ++comp) {
            stage.sigma[comp] = std::exp(p.logstd[comp]);
            stage.logstd_floored[comp] =
                logstd_raw[intent * 3 + comp] < cfg.bounds.logstd_floor;
        }

        for (int k = 0; k < 2; ++k) {
            const int t = depth + k;
            const ReferenceStep ref = reference_step(ctx.reference, t);
            const OffsetBox box = intention_box(static_cast<core::Intention>(intent),
                                                ref, cfg.bounds, cfg.v_max, cfg.dt);
            for (int comp = 0; comp < 3; ++comp) {
                double z;
                if (have_z) {
                    z = member.z[static_cast<std::size_t>(3 * t + comp)];
                } else {
                    const LocalOffset local =
                        to_local(member.offsets[static_cast<std::size_t>(t)], ref);
                    const double v =
                        comp == 0 ? local.along : (comp == 1 ? local.lat : local.dh);
                    bool clamped = false;
                    z = atanh_clamped((v - box.center[comp]) / box.half[comp], clamped);
                    eval.clamped = eval.clamped || clamped;
                }
                const double m = p.raw_mean[3 * k + comp];
                stage.z[3 * k + comp] = z;
                stage.mean[3 * k + comp] = m;
                eval.log_prob += squashed_log_density(z, m, stage.sigma[comp],
                                                      p.logstd[comp], box.half[comp]);
            }
        }
    }
    return eval;
}

double traj_log_prob(const SamplerCheckpoint& ckpt, const SamplerContext& ctx,
                     const GroupMember& member) {
    return eval_log_prob(ckpt, ctx, member).log_prob;
}

void backprop_log_prob(const SamplerCheckpoint& ckpt, const LogProbEval& eval,
                       double upstream, nn::GradientSet& grads) {
    const SamplerConfig& cfg = ckpt.config;
    const int N = cfg.num_intentions;
    if (grads.size() != ckpt.params.values.size())
        grads.assign(ckpt.params.values.size(), 0.0);
    double* logstd_grad =
        grads.data() + ckpt.params.manifest.offset_of(kLogStd);

    for (const LogProbEvalStage& stage : eval.stages) {
        nn::Mat d_raw = nn::Mat::Zero(N, 6);
        std::vector<double> d_log_prior(static_cast<std::size_t>(N), 0.0);
        d_log_prior[static_cast<std::size_t>(stage.intention)] = upstream;

        for (int k = 0; k < 2; ++k) {
            for (int comp = 0; comp < 3; ++comp) {
                const double z = stage.z[3 * k + comp];
                const double m = stage.mean[3 * k + comp];
                const double sigma = stage.sigma[comp];
                const double u = (z - m) / sigma;
                d_raw(stage.intention, 3 * k + comp) = upstream * u / sigma;
                if (!stage.logstd_floored[comp]) {
                    logstd_grad[stage.intention * 3 + comp] +=
                        upstream * (u * u - 1.0);
                }
            }
        }
        sampler_step_backward(ckpt, stage.cache, d_raw, d_log_prior, grads);
    }
}

void save_sampler(const std::string& path, const SamplerCheckpoint& ckpt) {
    nlohmann::ordered_json meta;
    meta["manifest"] = nlohmann::json::parse(ckpt.params.manifest.to_json());
    meta["token_dim"] = ckpt.config.token_dim;
    meta["heads"] = ckpt.config.heads;
    meta["context_tokens"] = ckpt.config.context_tokens;
    meta["feature_dim"] = ckpt.config.feature_dim;
    meta["horizon_steps"] = ckpt.config.horizon_steps;
    meta["dt"] = ckpt.config.dt;
    meta["v_max"] = ckpt.config.v_max;
    meta["num_intentions"] = ckpt.config.num_intentions;
    meta["init_logstd"] = ckpt.config.init_logstd;
    const OffsetBoundsConfig& b = ckpt.config.bounds;
    meta["bounds"] = {{"keep_halfwidth", b.keep_halfwidth},
                      {"keep_dh_halfwidth", b.keep_dh_halfwidth},
                      {"dy_max", b.dy_max},
                      {"dh_max", b.dh_max},
                      {"dx_acc", b.dx_acc},
                      {"along_cap_factor", b.along_cap_factor},
                      {"min_halfwidth", b.min_halfwidth},
                      {"logstd_floor", b.logstd_floor}};

    nn::CheckpointData data;
    data.role = "rl";
    data.rng_seed = ckpt.seed;
    data.step_count = ckpt.steps;
    data.meta_json = meta.dump();
    data.params = ckpt.params.values;
    nn::save_checkpoint_file(path, data);
}

SamplerCheckpoint load_sampler(const std::string& path) {
    const nn::CheckpointData data = nn::load_checkpoint_file(path);
    if (data.role != "rl")
        throw FormatError("checkpoint role mismatch: expected 'rl', found '" + data.role +
                          "'");
    const auto meta = nlohmann::json::parse(data.meta_json);
    SamplerCheckpoint ckpt;
    ckpt.config.token_dim = meta.at("token_dim");
    ckpt.config.heads = meta.at("heads");
    ckpt.config.context_tokens = meta.at("context_tokens");
    ckpt.config.feature_dim = meta.at("feature_dim");
    ckpt.config.horizon_steps = meta.at("horizon_steps");
    ckpt.config.dt = meta.at("dt");
    ckpt.config.v_max = meta.at("v_max");
    ckpt.config.num_intentions = meta.at("num_intentions");
    ckpt.config.init_logstd = meta.at("init_logstd");
    const auto& b = meta.at("bounds");
    ckpt.config.bounds.keep_halfwidth = b.at("keep_halfwidth");
    ckpt.config.bounds.keep_dh_halfwidth = b.at("keep_dh_halfwidth");
    ckpt.config.bounds.dy_max = b.at("dy_max");
    ckpt.config.bounds.dh_max = b.at("dh_max");
    ckpt.config.bounds.dx_acc = b.at("dx_acc");
    ckpt.config.bounds.along_cap_factor = b.at("along_cap_factor");
    ckpt.config.bounds.min_halfwidth = b.at("min_halfwidth");
    ckpt.config.bounds.logstd_floor = b.at("logstd_floor");
    ckpt.seed = data.rng_seed;
    ckpt.steps = data.step_count;
    ckpt.params.manifest = nn::Manifest::from_json(meta.at("manifest").dump());
    ckpt.params.values = data.params;
    if (ckpt.params.values.size() != ckpt.params.manifest.total_params())
        throw FormatError("sampler checkpoint parameter count mismatch");
    return ckpt;
}

}  // namespace pairplan::tree
