#include "pairplan/grpo/grpo.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "pairplan/scene/features.hpp"
#include "pairplan/util/errors.hpp"
#include "pairplan/util/parallel.hpp"
#include "pairplan/util/rng.hpp"

namespace pairplan::grpo {

std::vector<double> group_advantage(const std::vector<double>& rewards,
                                    bool* degenerate) {
    const std::size_t g = rewards.size();
    if (g < 2) throw ConfigError("group_advantage requires G >= 2");
    double mean = 0.0;
    for (double r : rewards) mean += r;
    mean /= static_cast<double>(g);
    double var = 0.0;
    for (double r : rewards) var += (r - mean) * (r - mean);
    var /= static_cast<double>(g);  // population variance, no Bessel correction
    const double std_dev = std::sqrt(var);

    std::vector<double> advantages(g, 0.0);
    if (std_dev < 1e-8) {
        if (degenerate != nullptr) *degenerate = true;
        return advantages;
    }
    if (degenerate != nullptr) *degenerate = false;
    for (std::size_t i = 0; i < g; ++i) advantages[i] = (rewards[i] - mean) / std_dev;
    return advantages;
}

double clipped_surrogate(double ratio, double advantage, double eps) {
    if (!(ratio > 0.0)) throw ContractViolation("surrogate ratio must be positive");
    const double clipped = std::clamp(ratio, 1.0 - eps, 1.0 + eps);
    return std::min(ratio * advantage, clipped * advantage);
}

double clipped_surrogate_grad(double ratio, double advantage, double eps) {
    if (!(ratio > 0.0)) throw ContractViolation("surrogate ratio must be positive");
    const double clipped = std::clamp(ratio, 1.0 - eps, 1.0 + eps);
    // min picks the unclipped branch on ties, matching clipped_surrogate
    if (ratio * advantage <= clipped * advantage) return ratio * advantage;
    return 0.0;
}

double kl_estimate(const std::vector<double>& new_lps,
                   const std::vector<double>& old_lps) {
    if (new_lps.size() != old_lps.size())
        throw ShapeError("kl_estimate: member list length mismatch");
    if (new_lps.empty()) return 0.0;
    double acc = 0.0;
    for (std::size_t i = 0; i < new_lps.size(); ++i) {
        const double delta = old_lps[i] - new_lps[i];
        acc += std::exp(delta) - delta - 1.0;
    }
    return acc / static_cast<double>(new_lps.size());
}

double update_beta(double beta, double measured_kl, double target_kl, double beta_min,
                   double beta_max) {
    if (measured_kl > 1.5 * target_kl) beta *= 2.0;
    else if (measured_kl < target_kl / 1.5) beta *= 0.5;
    return std::clamp(beta, beta_min, beta_max);
}

ObjectiveResult grpo_objective(const tree::SamplerCheckpoint& ckpt,
                               const tree::SamplerContext& ctx,
                               const tree::GroupSample& group, double beta, double eps) {
    ObjectiveResult result;
    result.gradients.assign(ckpt.params.values.size(), 0.0);
    const std::size_t g = group.members.size();
    if (group.degenerate || g == 0) {
        result.degenerate = true;
        return result;
    }
    if (group.advantages.size() != g || group.old_log_probs.size() != g)
        throw ShapeError("grpo_objective: group field lengths mismatch");

    const double inv_g = 1.0 / static_cast<double>(g);
    std::vector<double> new_lps(g, 0.0);
    for (std::size_t i = 0; i < g; ++i) {
        const tree::LogProbEval eval = tree::eval_log_prob(ckpt, ctx, group.members[i]);
        new_lps[i] = eval.log_prob;
        const double old_lp = group.old_log_probs[i];
        const double ratio = std::exp(eval.log_prob - old_lp);
        const double advantage = group.advantages[i];

        const double surr = clipped_surrogate(ratio, advantage, eps);
        const double delta = old_lp - eval.log_prob;
        const double kl_i = std::exp(delta) - delta - 1.0;
        result.objective += inv_g * (surr - beta * kl_i);
        result.kl += inv_g * kl_i;
        result.mean_ratio += inv_g * ratio;

        const double d_surr = clipped_surrogate_grad(ratio, advantage, eps);
        const double d_kl = 1.0 - std::exp(delta);  // d(kl_i)/d(new_lp)
        const double upstream = inv_g * (d_surr - beta * d_kl);
        if (upstream != 0.0)
            tree::backprop_log_prob(ckpt, eval, upstream, result.gradients);
    }
    return result;
}

RlTrainResult train_rl(const std::vector<sim::Scenario>& suite,
                       const tree::SamplerConfig& sampler_config,
                       const GrpoConfig& cfg, const sim::SimConfig& sim_config,
                       const metrics::MetricsConfig& metrics_config,
                       std::uint64_t seed) {
    if (suite.empty()) throw ConfigError("train_rl: empty scenario suite");
    const std::size_t n = suite.size();

    // per-scenario planning contexts rooted at the stored human demonstration
    std::vector<tree::SamplerContext> contexts(n);
    std::vector<double> ref_progress(n, 0.0);
    util::parallel_for(n, [&](std::size_t i) {
        contexts[i].features = scene::encode_scene(suite[i]);
        contexts[i].reference = suite[i].expert;
        const core::Trajectory clean =
            sim::synthesize_expert(suite[i], sim::Corruption::kNone, sim_config);
        ref_progress[i] = sim::rollout(suite[i], clean, sim_config).progress;
    });

    RlTrainResult result;
    result.checkpoint = tree::sampler_init(sampler_config, util::derive_seed(seed, 0x31));
    tree::SamplerCheckpoint& ckpt = result.checkpoint;

    nn::AdamWConfig opt_cfg;
    opt_cfg.lr = cfg.lr;
    opt_cfg.schedule = cfg.schedule;
    opt_cfg.lr_final = cfg.lr_final;
    opt_cfg.total_steps =
        static_cast<std::int64_t>(cfg.updates) * cfg.epochs_per_update;
    nn::AdamWState opt = nn::AdamWState::create(opt_cfg, ckpt.params.values.size());

    double beta = cfg.beta_init;
    const int batch = std::max(1, std::min<int>(cfg.scenarios_per_update,
                                                static_cast<int>(n)));

    for (int update = 0; update < cfg.updates; ++update) {
        // snapshot of pi_old drives sampling for this whole update
        const tree::SamplerCheckpoint snapshot = ckpt;

        std::vector<std::size_t> batch_ids(static_cast<std::size_t>(batch));
        for (int b = 0; b < batch; ++b)
            batch_ids[static_cast<std::size_t>(b)] =
                (static_cast<std::size_t>(update) * static_cast<std::size_t>(batch) +
                 static_cast<std::size_t>(b)) %
                n;

        std::vector<tree::GroupSample> groups(batch_ids.size());
        util::parallel_for(batch_ids.size(), [&](std::size_t b) {
            const std::size_t si = batch_ids[b];
            const sim::Scenario& scenario = suite[si];
            const tree::SamplerContext& ctx = contexts[si];

            tree::PruneScorer scorer = [&](const core::Trajectory& probe) {
                const sim::SimulationTrace trace =
                    sim::rollout(scenario, probe, sim_config);
                return metrics::pdms(
                    metrics::subscores(trace, scenario, ref_progress[si],
                                       metrics_config)
                        .base);
            };

            tree::GroupSample group;
            group.scenario_id = scenario.id;
            group.members = tree::sample_group(
                snapshot, ctx, cfg.group_size,
                util::derive_seed(seed, 0x1000 + static_cast<std::uint64_t>(update) * 131 +
                                            b),
                tree::ExpandMode::kSample, scorer);
            for (const auto& member : group.members) {
                const sim::SimulationTrace trace =
                    sim::rollout(scenario, member.trajectory, sim_config);
                group.rewards.push_back(metrics::pdms(
                    metrics::subscores(trace, scenario, ref_progress[si], metrics_config)
                        .base));
                group.old_log_probs.push_back(member.log_prob);
            }
            group.advantages = group_advantage(group.rewards, &group.degenerate);
            groups[b] = std::move(group);
        });

        double mean_reward = 0.0, max_reward = 0.0;
        std::size_t reward_count = 0;
        for (const auto& group : groups) {
            for (double r : group.rewards) {
                mean_reward += r;
                max_reward = std::max(max_reward, r);
                ++reward_count;
            }
        }
        if (reward_count > 0) mean_reward /= static_cast<double>(reward_count);

        double last_kl = 0.0, last_objective = 0.0;
        for (int epoch = 0; epoch < cfg.epochs_per_update; ++epoch) {
            nn::GradientSet grads(ckpt.params.values.size(), 0.0);
            double kl_acc = 0.0, obj_acc = 0.0;
            int live_groups = 0;
            for (std::size_t b = 0; b < groups.size(); ++b) {
                if (groups[b].degenerate) continue;
                const ObjectiveResult obj = grpo_objective(
                    ckpt, contexts[batch_ids[b]], groups[b], beta, cfg.clip_epsilon);
                for (std::size_t i = 0; i < grads.size(); ++i)
                    grads[i] += obj.gradients[i];
                kl_acc += obj.kl;
                obj_acc += obj.objective;
                ++live_groups;
            }
            if (live_groups == 0) break;  // every group degenerate: skip update
            const double scale = 1.0 / static_cast<double>(live_groups);
            for (auto& g : grads) g *= -scale;  // AdamW minimizes; J is ascent
            nn::adamw_step(ckpt.params, grads, opt);
            ckpt.steps += 1;
            last_kl = kl_acc * scale;
            last_objective = obj_acc * scale;
        }

        beta = update_beta(beta, last_kl, cfg.kl_target, cfg.beta_min, cfg.beta_max);
        result.log.push_back(RlLogRow{update, mean_reward, max_reward, last_kl, beta,
                                      last_objective});
    }
    return result;
}

void write_rl_log_csv(const std::string& path, const std::vector<RlLogRow>& rows) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open training log for writing: " + path);
    out << "update,mean_reward,max_reward,kl,beta,objective\n";
    char buf[256];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%d,%.6f,%.6f,%.8f,%.6f,%.6f\n", r.update,
                      r.mean_reward, r.max_reward, r.kl, r.beta, r.objective);
        out << buf;
    }
}

}  // namespace pairplan::grpo
