#pragma once

#include <optional>
#include <string>
#include <vector>

#include "pairplan/pipeline/config.hpp"

namespace pairplan::pipeline {

struct SuiteEntry {
    std::string id;
    std::string file;
    sim::Family family = sim::Family::kStraightFollow;
    sim::Corruption corruption = sim::Corruption::kNone;
};

struct Suite {
    std::vector<SuiteEntry> entries;
    std::vector<sim::Scenario> scenarios;  // aligned with entries
};

// Writes scenario_<id>.json files plus manifest.json ("suite_v1"). The
// corrupt fraction is spread over the compatible corruption modes.
void generate_suite(const ExperimentConfig& config, const std::string& out_dir);

Suite load_suite(const std::string& dir);

// Full inference pipeline: encode -> IL trajectory -> tree sampling rooted at
// the IL output -> RWM scoring/selection -> best-of-n over independent passes.
core::Trajectory plan(const sim::Scenario& scenario, const il::ILCheckpoint& il_ckpt,
                      const tree::SamplerCheckpoint& sampler_ckpt,
                      const rwm::RwmCheckpoint& rwm_ckpt, int n_bestof,
                      std::uint64_t seed, const ExperimentConfig& config);

// The n independently sampled and RWM-selected pass plans behind plan();
// plan() returns their best-of-n under the RWM reward.
std::vector<core::Trajectory> plan_passes(const sim::Scenario& scenario,
                                          const il::ILCheckpoint& il_ckpt,
                                          const tree::SamplerCheckpoint& sampler_ckpt,
                                          const rwm::RwmCheckpoint& rwm_ckpt,
                                          int n_bestof, std::uint64_t seed,
                                          const ExperimentConfig& config);

struct ReportRow {
    std::string scenario_id;
    std::string agent;
    metrics::ExtendedSubScores scores;
    double pdms = 0.0;
    double epdms = 0.0;
    double wall_time_ms = 0.0;
};

struct EvalResult {
    std::vector<ReportRow> rows;        // one per (scenario, agent)
    std::vector<ReportRow> aggregates;  // per-agent means, scenario_id "mean"
};

EvalResult run_eval(const ExperimentConfig& config, const Suite& suite,
                    const il::ILCheckpoint* il_ckpt,
                    const tree::SamplerCheckpoint* sampler_ckpt,
                    const rwm::RwmCheckpoint* rwm_ckpt);

// report.csv: deterministic metric rows (4-decimal fixed point) with a
// config-hash header comment. Wall times go to a separate timings file so the
// report stays byte-identical across runs and worker counts.
void write_report_csv(const std::string& path, const ExperimentConfig& config,
                      const EvalResult& result);
void write_timings_csv(const std::string& path, const EvalResult& result);
void write_report_svg(const std::string& path, const EvalResult& result);

// Plan-output serialization: "t,x,y,h" rows, 6-decimal fixed point.
void write_trajectory_csv(const std::string& path, const core::Trajectory& traj);

}  // namespace pairplan::pipeline
