// pairplan CLI: scenario generation, branch training, evaluation, planning.

#include <cstdio>
#include <filesystem>
#include <string>

#include <CLI11.hpp>

#include "pairplan/grpo/grpo.hpp"
#include "pairplan/il/il.hpp"
#include "pairplan/pipeline/pipeline.hpp"
#include "pairplan/rwm/rwm.hpp"
#include "pairplan/util/errors.hpp"

namespace fs = std::filesystem;
using namespace pairplan;

namespace {

pipeline::ExperimentConfig load_or_default(const std::string& path) {
    if (path.empty()) return pipeline::ExperimentConfig{};
    return pipeline::load_config(path);
}

std::vector<sim::Scenario> suite_scenarios(const pipeline::ExperimentConfig& cfg) {
    return pipeline::load_suite(cfg.suite_dir).scenarios;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"PaIR-style parallel imitation + reinforcement planner"};
    app.require_subcommand(1);

    std::string config_path;
    std::uint64_t seed_override = 0;
    bool seed_set = false;
    std::string out_dir = ".";
    app.add_option("--config", config_path, "experiment config (JSON)");
    app.add_option("--seed", seed_override, "seed override")->each([&](const std::string&) {
        seed_set = true;
    });
    app.add_option("--out", out_dir, "output directory");

    auto* gen = app.add_subcommand("gen-scenarios", "generate a scenario suite");
    auto* train_il_cmd = app.add_subcommand("train-il", "train the IL branch");
    auto* train_rl_cmd = app.add_subcommand("train-rl", "train the RL tree sampler");
    auto* train_rwm_cmd = app.add_subcommand("train-rwm", "train the reward world model");
    auto* eval_cmd = app.add_subcommand("eval", "evaluate the agent roster on a suite");
    bool with_svg = false;
    eval_cmd->add_flag("--svg", with_svg, "also write a report.svg bar chart");
    auto* plan_cmd = app.add_subcommand("plan", "plan a single scenario");
    std::string scenario_path;
    plan_cmd->add_option("--scenario", scenario_path, "scenario JSON file")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        pipeline::ExperimentConfig cfg = load_or_default(config_path);
        if (seed_set) cfg.seed = seed_override;
        fs::create_directories(out_dir);

        if (gen->parsed()) {
            const std::string suite_dir = (fs::path(out_dir) / cfg.suite_dir).string();
            pipeline::generate_suite(cfg, suite_dir);
            std::printf("suite written to %s\n", suite_dir.c_str());
        } else if (train_il_cmd->parsed()) {
            const auto scenarios = suite_scenarios(cfg);
            const il::ILCheckpoint ckpt = il::train_il(scenarios, cfg.il, cfg.seed);
            const std::string path = (fs::path(out_dir) / cfg.il_checkpoint).string();
            il::save_il(path, ckpt);
            std::printf("il checkpoint written to %s (final loss %.4f)\n", path.c_str(),
                        ckpt.loss_curve.empty() ? 0.0 : ckpt.loss_curve.back());
        } else if (train_rl_cmd->parsed()) {
            const auto scenarios = suite_scenarios(cfg);
            const grpo::RlTrainResult result = grpo::train_rl(
                scenarios, cfg.sampler, cfg.grpo, cfg.sim, cfg.metrics, cfg.seed);
            const std::string path = (fs::path(out_dir) / cfg.rl_checkpoint).string();
            tree::save_sampler(path, result.checkpoint);
            grpo::write_rl_log_csv((fs::path(out_dir) / "rl_training_log.csv").string(),
                                   result.log);
            std::printf("rl checkpoint written to %s\n", path.c_str());
        } else if (train_rwm_cmd->parsed()) {
            const auto scenarios = suite_scenarios(cfg);
            const tree::SamplerCheckpoint sampler = tree::load_sampler(
                (fs::path(out_dir) / cfg.rl_checkpoint).string());
            const rwm::RwmCheckpoint ckpt = rwm::train_rwm(
                scenarios, sampler, cfg.rwm, cfg.sim, cfg.metrics, cfg.seed);
            const std::string path = (fs::path(out_dir) / cfg.rwm_checkpoint).string();
            rwm::save_rwm(path, ckpt);
            std::printf("rwm checkpoint written to %s (holdout MAE %.4f)\n", path.c_str(),
                        ckpt.holdout_mae);
        } else if (eval_cmd->parsed()) {
            const pipeline::Suite suite = pipeline::load_suite(cfg.suite_dir);
            il::ILCheckpoint il_ckpt;
            tree::SamplerCheckpoint sampler_ckpt;
            rwm::RwmCheckpoint rwm_ckpt;
            const il::ILCheckpoint* il_ptr = nullptr;
            const tree::SamplerCheckpoint* rl_ptr = nullptr;
            const rwm::RwmCheckpoint* rwm_ptr = nullptr;
            bool need_il = false, need_rl = false;
            for (const auto& agent : cfg.agents) {
                need_il = need_il || agent != "human";
                need_rl = need_rl ||
                          agent == "pair_drive" || agent == "pair_drive_bestof6";
            }
            if (need_il) {
                il_ckpt = il::load_il(cfg.il_checkpoint);
                il_ptr = &il_ckpt;
            }
            if (need_rl) {
                sampler_ckpt = tree::load_sampler(cfg.rl_checkpoint);
                rwm_ckpt = rwm::load_rwm(cfg.rwm_checkpoint);
                rl_ptr = &sampler_ckpt;
                rwm_ptr = &rwm_ckpt;
            }
            const pipeline::EvalResult result =
                pipeline::run_eval(cfg, suite, il_ptr, rl_ptr, rwm_ptr);
            pipeline::write_report_csv((fs::path(out_dir) / "report.csv").string(), cfg,
                                       result);
            pipeline::write_timings_csv((fs::path(out_dir) / "timings.csv").string(),
                                        result);
            if (with_svg)
                pipeline::write_report_svg((fs::path(out_dir) / "report.svg").string(),
                                           result);
            for (const auto& agg : result.aggregates)
                std::printf("%-20s mean PDMS %.4f  mean EPDMS %.4f\n", agg.agent.c_str(),
                            agg.pdms, agg.epdms);
        } else if (plan_cmd->parsed()) {
            const sim::Scenario scenario = sim::load_scenario(scenario_path);
            const il::ILCheckpoint il_ckpt = il::load_il(cfg.il_checkpoint);
            const tree::SamplerCheckpoint sampler_ckpt =
                tree::load_sampler(cfg.rl_checkpoint);
            const rwm::RwmCheckpoint rwm_ckpt = rwm::load_rwm(cfg.rwm_checkpoint);
            const core::Trajectory traj = pipeline::plan(
                scenario, il_ckpt, sampler_ckpt, rwm_ckpt, cfg.bestof_n, cfg.seed, cfg);
            const std::string path = (fs::path(out_dir) / "plan.csv").string();
            pipeline::write_trajectory_csv(path, traj);
            std::printf("plan written to %s\n", path.c_str());
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "pairplan: %s\n", e.what());
        return 1;
    }
    return 0;
}
