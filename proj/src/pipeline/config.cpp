#include "pairplan/pipeline/config.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "pairplan/util/errors.hpp"

namespace pairplan::pipeline {

namespace {

using ordered_json = nlohmann::ordered_json;

template <typename T>
void maybe(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

std::string config_to_json(const ExperimentConfig& c) {
    ordered_json j;
    j["suite_dir"] = c.suite_dir;
    j["seed"] = c.seed;

    j["sim"] = {{"horizon_steps", c.sim.horizon_steps},
                {"dt", c.sim.dt},
                {"v_max", c.sim.v_max},
                {"lane_width", c.sim.lane_width},
                {"corridor_lo", c.sim.corridor_lo},
                {"corridor_hi", c.sim.corridor_hi},
                {"grid_cell", c.sim.grid_cell},
                {"grid_width", c.sim.grid_width},
                {"grid_height", c.sim.grid_height},
                {"grid_origin_x", c.sim.grid_origin_x},
                {"grid_origin_y", c.sim.grid_origin_y},
                {"ego_half_x", c.sim.ego_half_x},
                {"ego_half_y", c.sim.ego_half_y},
                {"plan_accel_cap", c.sim.plan_accel_cap},
                {"plan_jerk_cap", c.sim.plan_jerk_cap},
                {"headway_time", c.sim.headway_time},
                {"min_gap", c.sim.min_gap},
                {"eps_v", c.sim.eps_v}};

    j["metrics"] = {{"ttc_threshold", c.metrics.ttc_threshold},
                    {"a_max", c.metrics.a_max},
                    {"j_max", c.metrics.j_max},
                    {"lane_half_width", c.metrics.lane_half_width},
                    {"eps_p", c.metrics.eps_p},
                    {"eps_v", c.metrics.eps_v}};

    j["il"] = {{"feature_dim", c.il.feature_dim}, {"hidden", c.il.hidden},
               {"horizon_steps", c.il.horizon_steps}, {"dt", c.il.dt},
               {"v_max", c.il.v_max}, {"lr", c.il.lr},
               {"epochs", c.il.epochs}, {"batch", c.il.batch}};

    j["sampler"] = {{"token_dim", c.sampler.token_dim},
                    {"heads", c.sampler.heads},
                    {"context_tokens", c.sampler.context_tokens},
                    {"feature_dim", c.sampler.feature_dim},
                    {"horizon_steps", c.sampler.horizon_steps},
                    {"dt", c.sampler.dt},
                    {"v_max", c.sampler.v_max},
                    {"num_intentions", c.sampler.num_intentions},
                    {"init_logstd", c.sampler.init_logstd},
                    {"bounds",
                     {{"keep_halfwidth", c.sampler.bounds.keep_halfwidth},
                      {"keep_dh_halfwidth", c.sampler.bounds.keep_dh_halfwidth},
                      {"dy_max", c.sampler.bounds.dy_max},
                      {"dh_max", c.sampler.bounds.dh_max},
                      {"dx_acc", c.sampler.bounds.dx_acc},
                      {"along_cap_factor", c.sampler.bounds.along_cap_factor},
                      {"min_halfwidth", c.sampler.bounds.min_halfwidth},
                      {"logstd_floor", c.sampler.bounds.logstd_floor}}}};

    j["grpo"] = {{"group_size", c.grpo.group_size},
                 {"clip_epsilon", c.grpo.clip_epsilon},
                 {"beta_init", c.grpo.beta_init},
                 {"kl_target", c.grpo.kl_target},
                 {"beta_min", c.grpo.beta_min},
                 {"beta_max", c.grpo.beta_max},
                 {"updates", c.grpo.updates},
                 {"scenarios_per_update", c.grpo.scenarios_per_update},
                 {"epochs_per_update", c.grpo.epochs_per_update},
                 {"lr", c.grpo.lr},
                 {"schedule", c.grpo.schedule == nn::LrSchedule::kCosine ? "cosine"
                                                                         : "constant"},
                 {"lr_final", c.grpo.lr_final}};

    j["rwm"] = {{"feature_dim", c.rwm.feature_dim},
                {"hidden", c.rwm.hidden},
                {"horizon_steps", c.rwm.horizon_steps},
                {"num_commands", c.rwm.num_commands},
                {"coord_scale", c.rwm.coord_scale},
                {"lr", c.rwm.lr},
                {"epochs", c.rwm.epochs},
                {"conf_epochs", c.rwm.conf_epochs},
                {"batch", c.rwm.batch},
                {"samples_per_scenario", c.rwm.samples_per_scenario},
                {"holdout_fraction", c.rwm.holdout_fraction}};

    j["scenarios_per_family"] = c.scenarios_per_family;
    j["corrupt_fraction"] = c.corrupt_fraction;
    j["bestof_n"] = c.bestof_n;
    j["select_policy"] = c.select_policy == rwm::SelectPolicy::kConfidenceWeighted
                             ? "confidence_weighted"
                             : "reward";
    j["agents"] = c.agents;
    j["il_checkpoint"] = c.il_checkpoint;
    j["rl_checkpoint"] = c.rl_checkpoint;
    j["rwm_checkpoint"] = c.rwm_checkpoint;
    return j.dump(2) + "\n";
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(std::string("config is not valid JSON: ") + e.what());
    }

    ExperimentConfig c;
    maybe(j, "suite_dir", c.suite_dir);
    maybe(j, "seed", c.seed);
    if (j.contains("sim")) {
        const auto& s = j.at("sim");
        maybe(s, "horizon_steps", c.sim.horizon_steps);
        maybe(s, "dt", c.sim.dt);
        maybe(s, "v_max", c.sim.v_max);
        maybe(s, "lane_width", c.sim.lane_width);
        maybe(s, "corridor_lo", c.sim.corridor_lo);
        maybe(s, "corridor_hi", c.sim.corridor_hi);
        maybe(s, "grid_cell", c.sim.grid_cell);
        maybe(s, "grid_width", c.sim.grid_width);
        maybe(s, "grid_height", c.sim.grid_height);
        maybe(s, "grid_origin_x", c.sim.grid_origin_x);
        maybe(s, "grid_origin_y", c.sim.grid_origin_y);
        maybe(s, "ego_half_x", c.sim.ego_half_x);
        maybe(s, "ego_half_y", c.sim.ego_half_y);
        maybe(s, "plan_accel_cap", c.sim.plan_accel_cap);
        maybe(s, "plan_jerk_cap", c.sim.plan_jerk_cap);
        maybe(s, "headway_time", c.sim.headway_time);
        maybe(s, "min_gap", c.sim.min_gap);
        maybe(s, "eps_v", c.sim.eps_v);
    }
    if (j.contains("metrics")) {
        const auto& m = j.at("metrics");
        maybe(m, "ttc_threshold", c.metrics.ttc_threshold);
        maybe(m, "a_max", c.metrics.a_max);
        maybe(m, "j_max", c.metrics.j_max);
        maybe(m, "lane_half_width", c.metrics.lane_half_width);
        maybe(m, "eps_p", c.metrics.eps_p);
        maybe(m, "eps_v", c.metrics.eps_v);
    }
    if (j.contains("il")) {
        const auto& s = j.at("il");
        maybe(s, "feature_dim", c.il.feature_dim);
        maybe(s, "hidden", c.il.hidden);
        maybe(s, "horizon_steps", c.il.horizon_steps);
        maybe(s, "dt", c.il.dt);
        maybe(s, "v_max", c.il.v_max);
        maybe(s, "lr", c.il.lr);
        maybe(s, "epochs", c.il.epochs);
        maybe(s, "batch", c.il.batch);
    }
    if (j.contains("sampler")) {
        const auto& s = j.at("sampler");
        maybe(s, "token_dim", c.sampler.token_dim);
        maybe(s, "heads", c.sampler.heads);
        maybe(s, "context_tokens", c.sampler.context_tokens);
        maybe(s, "feature_dim", c.sampler.feature_dim);
        maybe(s, "horizon_steps", c.sampler.horizon_steps);
        maybe(s, "dt", c.sampler.dt);
        maybe(s, "v_max", c.sampler.v_max);
        maybe(s, "num_intentions", c.sampler.num_intentions);
        maybe(s, "init_logstd", c.sampler.init_logstd);
        if (s.contains("bounds")) {
            const auto& b = s.at("bounds");
            maybe(b, "keep_halfwidth", c.sampler.bounds.keep_halfwidth);
            maybe(b, "keep_dh_halfwidth", c.sampler.bounds.keep_dh_halfwidth);
            maybe(b, "dy_max", c.sampler.bounds.dy_max);
            maybe(b, "dh_max", c.sampler.bounds.dh_max);
            maybe(b, "dx_acc", c.sampler.bounds.dx_acc);
            maybe(b, "along_cap_factor", c.sampler.bounds.along_cap_factor);
            maybe(b, "min_halfwidth", c.sampler.bounds.min_halfwidth);
            maybe(b, "logstd_floor", c.sampler.bounds.logstd_floor);
        }
    }
    if (j.contains("grpo")) {
        const auto& s = j.at("grpo");
        maybe(s, "group_size", c.grpo.group_size);
        maybe(s, "clip_epsilon", c.grpo.clip_epsilon);
        maybe(s, "beta_init", c.grpo.beta_init);
        maybe(s, "kl_target", c.grpo.kl_target);
        maybe(s, "beta_min", c.grpo.beta_min);
        maybe(s, "beta_max", c.grpo.beta_max);
        maybe(s, "updates", c.grpo.updates);
        maybe(s, "scenarios_per_update", c.grpo.scenarios_per_update);
        maybe(s, "epochs_per_update", c.grpo.epochs_per_update);
        maybe(s, "lr", c.grpo.lr);
        maybe(s, "lr_final", c.grpo.lr_final);
        if (s.contains("schedule")) {
            const std::string sched = s.at("schedule");
            if (sched == "cosine") c.grpo.schedule = nn::LrSchedule::kCosine;
            else if (sched == "constant") c.grpo.schedule = nn::LrSchedule::kConstant;
            else throw ConfigError("unknown lr schedule: " + sched);
        }
    }
    if (j.contains("rwm")) {
        const auto& s = j.at("rwm");
        maybe(s, "feature_dim", c.rwm.feature_dim);
        maybe(s, "hidden", c.rwm.hidden);
        maybe(s, "horizon_steps", c.rwm.horizon_steps);
        maybe(s, "num_commands", c.rwm.num_commands);
        maybe(s, "coord_scale", c.rwm.coord_scale);
        maybe(s, "lr", c.rwm.lr);
        maybe(s, "epochs", c.rwm.epochs);
        maybe(s, "conf_epochs", c.rwm.conf_epochs);
        maybe(s, "batch", c.rwm.batch);
        maybe(s, "samples_per_scenario", c.rwm.samples_per_scenario);
        maybe(s, "holdout_fraction", c.rwm.holdout_fraction);
    }
    maybe(j, "scenarios_per_family", c.scenarios_per_family);
    maybe(j, "corrupt_fraction", c.corrupt_fraction);
    maybe(j, "bestof_n", c.bestof_n);
    if (j.contains("select_policy")) {
        const std::string p = j.at("select_policy");
        if (p == "reward") c.select_policy = rwm::SelectPolicy::kReward;
        else if (p == "confidence_weighted")
            c.select_policy = rwm::SelectPolicy::kConfidenceWeighted;
        else throw ConfigError("unknown select policy: " + p);
    }
    maybe(j, "agents", c.agents);
    maybe(j, "il_checkpoint", c.il_checkpoint);
    maybe(j, "rl_checkpoint", c.rl_checkpoint);
    maybe(j, "rwm_checkpoint", c.rwm_checkpoint);
    return c;
}

void save_config(const std::string& path, const ExperimentConfig& config) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open config for writing: " + path);
    out << config_to_json(config);
}

std::uint64_t config_hash(const ExperimentConfig& config) {
    const std::string text = config_to_json(config);
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001b3ull;
    }
    return h;
}

}  // namespace pairplan::pipeline
