#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pairplan/nn/adamw.hpp"
#include "pairplan/nn/nn.hpp"
#include "pairplan/scene/features.hpp"
#include "pairplan/sim/simulator.hpp"

namespace pairplan::il {

using scene::SceneFeatures;
using scene::encode_scene;
using scene::kFeatureDim;

struct IlConfig {
    int feature_dim = kFeatureDim;
    int hidden = 128;
    int horizon_steps = 8;
    double dt = 0.5;
    double v_max = 15.0;
    double lr = 1e-4;
    int epochs = 50;
    int batch = 32;
};

struct ILCheckpoint {
    nn::ParameterSet params;
    IlConfig config;
    std::uint64_t seed = 0;
    std::uint64_t steps = 0;
    std::vector<double> loss_curve;  // mean L1 per epoch
};

nn::Manifest il_manifest(const IlConfig& config);

// Fresh randomly initialized checkpoint.
ILCheckpoint il_init(const IlConfig& config, std::uint64_t seed);

// Decodes T+1 ego-frame waypoints; point 0 pinned to the origin and per-step
// displacements clamped to the kinematic bound.
core::Trajectory il_forward(const ILCheckpoint& ckpt, const SceneFeatures& features);

// Mean absolute difference over all (T+1)*3 coordinates, headings wrapped.
double il_loss(const core::Trajectory& pred, const core::Trajectory& human);

// Supervised training on the suite's stored expert trajectories.
ILCheckpoint train_il(const std::vector<sim::Scenario>& suite, const IlConfig& config,
                      std::uint64_t seed);

void save_il(const std::string& path, const ILCheckpoint& ckpt);
ILCheckpoint load_il(const std::string& path);

}  // namespace pairplan::il
