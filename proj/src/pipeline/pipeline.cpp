#include "pairplan/pipeline/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "pairplan/scene/features.hpp"
#include "pairplan/util/errors.hpp"
#include "pairplan/util/parallel.hpp"
#include "pairplan/util/rng.hpp"

namespace pairplan::pipeline {

namespace fs = std::filesystem;

void generate_suite(const ExperimentConfig& config, const std::string& out_dir) {
    fs::create_directories(out_dir);
    util::Rng corrupt_rng(util::derive_seed(config.seed, 0x9001));

    nlohmann::ordered_json manifest;
    manifest["schema_version"] = "suite_v1";
    nlohmann::ordered_json entries = nlohmann::ordered_json::array();

    int alternator = 0;
    for (int f = 0; f < sim::kNumFamilies; ++f) {
        const sim::Family family = static_cast<sim::Family>(f);
        for (int i = 0; i < config.scenarios_per_family; ++i) {
            const std::uint64_t scn_seed =
                util::derive_seed(config.seed, static_cast<std::uint64_t>(f) * 100000 +
                                                   static_cast<std::uint64_t>(i));
            sim::Scenario scenario = sim::generate_scenario(family, scn_seed, config.sim);

            sim::Corruption corruption = sim::Corruption::kNone;
            if (corrupt_rng.uniform() < config.corrupt_fraction) {
                if (family == sim::Family::kRedLight) {
                    corruption = sim::Corruption::kRedLightRun;
                } else {
                    corruption = (alternator++ % 2 == 0) ? sim::Corruption::kOffroadDrift
                                                         : sim::Corruption::kSlowProgress;
                }
                scenario.expert = sim::synthesize_expert(scenario, corruption, config.sim);
                scenario.corruption = corruption;
            }

            const std::string file = "scenario_" + scenario.id + ".json";
            sim::save_scenario((fs::path(out_dir) / file).string(), scenario);
            nlohmann::ordered_json e;
            e["id"] = scenario.id;
            e["family"] = sim::family_name(family);
            e["corruption"] = sim::corruption_name(corruption);
            e["file"] = file;
            entries.push_back(e);
        }
    }
    manifest["scenarios"] = entries;
    std::ofstream out(fs::path(out_dir) / "manifest.json", std::ios::trunc);
    if (!out) throw IoError("cannot write suite manifest in " + out_dir);
    out << manifest.dump(2) << "\n";
}

Suite load_suite(const std::string& dir) {
    const fs::path manifest_path = fs::path(dir) / "manifest.json";
    std::ifstream in(manifest_path);
    if (!in) throw IoError("cannot open suite manifest: " + manifest_path.string());
    nlohmann::json manifest;
    try {
        in >> manifest;
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(std::string("suite manifest is not valid JSON: ") + e.what());
    }
    if (manifest.at("schema_version") != "suite_v1")
        throw FormatError("suite manifest schema mismatch (want suite_v1)");

    Suite suite;
    for (const auto& e : manifest.at("scenarios")) {
        SuiteEntry entry;
        entry.id = e.at("id");
        entry.file = e.at("file");
        entry.family = sim::family_from_name(e.at("family"));
        entry.corruption = sim::corruption_from_name(e.at("corruption"));
        suite.entries.push_back(entry);
    }
    suite.scenarios.resize(suite.entries.size());
    util::parallel_for(suite.entries.size(), [&](std::size_t i) {
        suite.scenarios[i] =
            sim::load_scenario((fs::path(dir) / suite.entries[i].file).string());
    });
    return suite;
}

std::vector<core::Trajectory> plan_passes(const sim::Scenario& scenario,
                                          const il::ILCheckpoint& il_ckpt,
                                          const tree::SamplerCheckpoint& sampler_ckpt,
                                          const rwm::RwmCheckpoint& rwm_ckpt,
                                          int n_bestof, std::uint64_t seed,
                                          const ExperimentConfig& config) {
    if (n_bestof < 1) throw ConfigError("plan: n_bestof must be >= 1");
    const scene::SceneFeatures features = scene::encode_scene(scenario);
    const core::Trajectory il_local = il_forward(il_ckpt, features);
    const core::Trajectory il_traj = core::from_ego_frame(il_local, scenario.ego_init);

    const auto rwm_score = [&](const core::Trajectory& traj) {
        return rwm::rwm_forward(rwm_ckpt, features, scenario.command,
                                core::to_ego_frame(traj, scenario.ego_init));
    };
    const rwm::RwmOutput il_score = rwm_score(il_traj);

    tree::SamplerContext ctx;
    ctx.features = features;
    ctx.reference = il_traj;

    tree::PruneScorer prune_scorer = [&](const core::Trajectory& probe) {
        return rwm_score(probe).reward;
    };

    std::vector<core::Trajectory> plans;
    plans.reserve(static_cast<std::size_t>(n_bestof));
    for (int pass = 0; pass < n_bestof; ++pass) {
        const std::vector<tree::GroupMember> members = tree::sample_group(
            sampler_ckpt, ctx, config.grpo.group_size,
            util::derive_seed(seed, 0xa000 + static_cast<std::uint64_t>(pass)),
            tree::ExpandMode::kSample, prune_scorer);
        std::vector<std::pair<core::Trajectory, rwm::RwmOutput>> candidates;
        candidates.reserve(members.size());
        for (const auto& member : members)
            candidates.emplace_back(member.trajectory, rwm_score(member.trajectory));
        plans.push_back(
            rwm::select_plan(il_traj, candidates, il_score, config.select_policy));
    }
    return plans;
}

core::Trajectory plan(const sim::Scenario& scenario, const il::ILCheckpoint& il_ckpt,
                      const tree::SamplerCheckpoint& sampler_ckpt,
                      const rwm::RwmCheckpoint& rwm_ckpt, int n_bestof,
                      std::uint64_t seed, const ExperimentConfig& config) {
    const std::vector<core::Trajectory> plans =
        plan_passes(scenario, il_ckpt, sampler_ckpt, rwm_ckpt, n_bestof, seed, config);
    if (plans.size() == 1) return plans.front();
    const scene::SceneFeatures features = scene::encode_scene(scenario);
    return rwm::best_of_n(plans, [&](const core::Trajectory& traj) {
        return rwm::rwm_forward(rwm_ckpt, features, scenario.command,
                                core::to_ego_frame(traj, scenario.ego_init))
            .reward;
    });
}

EvalResult run_eval(const ExperimentConfig& config, const Suite& suite,
                    const il::ILCheckpoint* il_ckpt,
                    const tree::SamplerCheckpoint* sampler_ckpt,
                    const rwm::RwmCheckpoint* rwm_ckpt) {
    if (suite.scenarios.empty()) throw ConfigError("run_eval: empty suite");
    for (const std::string& agent : config.agents) {
        if (agent != "human" && agent != "il_only" && agent != "pair_drive" &&
            agent != "pair_drive_bestof6")
            throw ConfigError("unknown agent in roster: " + agent);
        if (agent != "human" && il_ckpt == nullptr)
            throw ConfigError("agent '" + agent + "' requires an IL checkpoint");
        if ((agent == "pair_drive" || agent == "pair_drive_bestof6") &&
            (sampler_ckpt == nullptr || rwm_ckpt == nullptr))
            throw ConfigError("agent '" + agent + "' requires rl and rwm checkpoints");
    }

    const std::size_t n = suite.scenarios.size();
    const std::size_t m = config.agents.size();
    EvalResult result;
    result.rows.assign(n * m, ReportRow{});

    util::parallel_for(n, [&](std::size_t i) {
        const sim::Scenario& scenario = suite.scenarios[i];
        const core::Trajectory clean =
            sim::synthesize_expert(scenario, sim::Corruption::kNone, config.sim);
        const double ref_progress =
            sim::rollout(scenario, clean, config.sim).progress;
        const metrics::ExtendedSubScores expert_scores = metrics::subscores(
            sim::rollout(scenario, scenario.expert, config.sim), scenario, ref_progress,
            config.metrics);
        const metrics::HumanMask mask = metrics::human_mask(expert_scores);

        for (std::size_t a = 0; a < m; ++a) {
            const std::string& agent = config.agents[a];
            const auto t0 = std::chrono::steady_clock::now();
            core::Trajectory traj;
            if (agent == "human") {
                traj = scenario.expert;
            } else if (agent == "il_only") {
                traj = core::from_ego_frame(
                    il_forward(*il_ckpt, scene::encode_scene(scenario)),
                    scenario.ego_init);
            } else {
                const int n_bestof = agent == "pair_drive_bestof6" ? config.bestof_n : 1;
                traj = plan(scenario, *il_ckpt, *sampler_ckpt, *rwm_ckpt, n_bestof,
                            util::derive_seed(config.seed, 0xe000 + i), config);
            }
            const auto t1 = std::chrono::steady_clock::now();

            ReportRow& row = result.rows[i * m + a];
            row.scenario_id = scenario.id;
            row.agent = agent;
            row.scores = metrics::subscores(sim::rollout(scenario, traj, config.sim),
                                            scenario, ref_progress, config.metrics);
            row.pdms = metrics::pdms(row.scores.base);
            row.epdms = metrics::epdms(row.scores, mask);
            row.wall_time_ms =
                std::chrono::duration<double, std::milli>(t1 - t0).count();
        }
    });

    // per-agent means over the suite
    for (std::size_t a = 0; a < m; ++a) {
        ReportRow agg;
        agg.scenario_id = "mean";
        agg.agent = config.agents[a];
        metrics::ExtendedSubScores& s = agg.scores;
        s.base.nc = s.base.dac = s.base.ep = s.base.ttc = s.base.comfort = 0.0;
        s.ddc = s.tlc = s.lk = s.hc = s.ec = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const ReportRow& row = result.rows[i * m + a];
            s.base.nc += row.scores.base.nc;
            s.base.dac += row.scores.base.dac;
            s.base.ep += row.scores.base.ep;
            s.base.ttc += row.scores.base.ttc;
            s.base.comfort += row.scores.base.comfort;
            s.ddc += row.scores.ddc;
            s.tlc += row.scores.tlc;
            s.lk += row.scores.lk;
            s.hc += row.scores.hc;
            s.ec += row.scores.ec;
            agg.pdms += row.pdms;
            agg.epdms += row.epdms;
            agg.wall_time_ms += row.wall_time_ms;
        }
        const double inv = 1.0 / static_cast<double>(n);
        s.base.nc *= inv;
        s.base.dac *= inv;
        s.base.ep *= inv;
        s.base.ttc *= inv;
        s.base.comfort *= inv;
        s.ddc *= inv;
        s.tlc *= inv;
        s.lk *= inv;
        s.hc *= inv;
        s.ec *= inv;
        agg.pdms *= inv;
        agg.epdms *= inv;
        agg.wall_time_ms *= inv;
        result.aggregates.push_back(agg);
    }
    return result;
}

namespace {

void write_row(std::ofstream& out, const ReportRow& row) {
    char buf[512];
    const metrics::ExtendedSubScores& s = row.scores;
    std::snprintf(buf, sizeof(buf),
                  "%s,%s,%.4f,%.4f,%.4f,%.4f,%.4f,%.4f,%.4f,%.4f,%.4f,%.4f,%.4f,%.4f\n",
                  row.scenario_id.c_str(), row.agent.c_str(), s.base.nc, s.base.dac,
                  s.base.ep, s.base.ttc, s.base.comfort, s.ddc, s.tlc, s.lk, s.hc, s.ec,
                  row.pdms, row.epdms);
    out << buf;
}

}  // namespace

void write_report_csv(const std::string& path, const ExperimentConfig& config,
                      const EvalResult& result) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open report for writing: " + path);
    char head[64];
    std::snprintf(head, sizeof(head), "# config_hash=%016llx\n",
                  static_cast<unsigned long long>(config_hash(config)));
    out << head;
    out << "scenario_id,agent,nc,dac,ep,ttc,comfort,ddc,tlc,lk,hc,ec,pdms,epdms\n";
    for (const auto& row : result.rows) write_row(out, row);
    for (const auto& row : result.aggregates) write_row(out, row);
    if (!out) throw IoError("report write failed: " + path);
}

void write_timings_csv(const std::string& path, const EvalResult& result) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open timings for writing: " + path);
    out << "scenario_id,agent,wall_time_ms\n";
    char buf[256];
    for (const auto& row : result.rows) {
        std::snprintf(buf, sizeof(buf), "%s,%s,%.3f\n", row.scenario_id.c_str(),
                      row.agent.c_str(), row.wall_time_ms);
        out << buf;
    }
}

void write_report_svg(const std::string& path, const EvalResult& result) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open svg for writing: " + path);
    const std::size_t n = result.aggregates.size();
    const int bar_w = 52, gap = 36, left = 70, base_y = 240, chart_h = 180;
    const int width =
        left + static_cast<int>(n) * 2 * (bar_w + gap / 2) + gap + 40;
    out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width
        << "' height='300'>\n";
    out << "<text x='10' y='20' font-size='14'>mean PDMS (dark) / EPDMS (light) per "
           "agent</text>\n";
    out << "<line x1='" << left - 10 << "' y1='" << base_y << "' x2='" << width - 20
        << "' y2='" << base_y << "' stroke='black'/>\n";
    int x = left;
    for (const auto& agg : result.aggregates) {
        const int h1 = static_cast<int>(agg.pdms * chart_h);
        const int h2 = static_cast<int>(agg.epdms * chart_h);
        out << "<rect x='" << x << "' y='" << base_y - h1 << "' width='" << bar_w
            << "' height='" << h1 << "' fill='#2b5f9e'/>\n";
        out << "<rect x='" << x + bar_w + 4 << "' y='" << base_y - h2 << "' width='"
            << bar_w << "' height='" << h2 << "' fill='#7aa7d6'/>\n";
        out << "<text x='" << x << "' y='" << base_y + 16 << "' font-size='11'>"
            << agg.agent << "</text>\n";
        char label[64];
        std::snprintf(label, sizeof(label), "%.3f", agg.pdms);
        out << "<text x='" << x << "' y='" << base_y - h1 - 4 << "' font-size='11'>"
            << label << "</text>\n";
        x += 2 * bar_w + gap;
    }
    out << "</svg>\n";
}

void write_trajectory_csv(const std::string& path, const core::Trajectory& traj) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open trajectory for writing: " + path);
    out << "t,x,y,h\n";
    for (const std::string& row : core::trajectory_rows(traj)) out << row << "\n";
}

}  // namespace pairplan::pipeline
