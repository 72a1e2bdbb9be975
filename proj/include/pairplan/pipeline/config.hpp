#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pairplan/grpo/grpo.hpp"
#include "pairplan/il/il.hpp"
#include "pairplan/metrics/metrics.hpp"
#include "pairplan/rwm/rwm.hpp"
#include "pairplan/sim/simulator.hpp"
#include "pairplan/tree/sampler.hpp"

namespace pairplan::pipeline {

struct ExperimentConfig {
    std::string suite_dir = "suite";
    std::uint64_t seed = 1;

    sim::SimConfig sim;
    metrics::MetricsConfig metrics;
    il::IlConfig il;
    tree::SamplerConfig sampler;
    grpo::GrpoConfig grpo;
    rwm::RwmConfig rwm;

    // suite generation
    int scenarios_per_family = 40;
    double corrupt_fraction = 0.3;

    // inference
    int bestof_n = 6;
    rwm::SelectPolicy select_policy = rwm::SelectPolicy::kReward;

    // evaluation roster
    std::vector<std::string> agents = {"human", "il_only", "pair_drive",
                                       "pair_drive_bestof6"};
    std::string il_checkpoint = "il.ckpt";
    std::string rl_checkpoint = "rl.ckpt";
    std::string rwm_checkpoint = "rwm.ckpt";
};

// JSON round trip; absent fields keep their defaults.
ExperimentConfig load_config(const std::string& path);
std::string config_to_json(const ExperimentConfig& config);
void save_config(const std::string& path, const ExperimentConfig& config);

// FNV-1a over the canonical JSON dump; stamped into report headers.
std::uint64_t config_hash(const ExperimentConfig& config);

}  // namespace pairplan::pipeline
