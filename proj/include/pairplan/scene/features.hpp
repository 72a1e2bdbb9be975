#pragma once

#include <vector>

#include "pairplan/sim/scenario.hpp"

namespace pairplan::scene {

// Rasterized scene descriptor standing in for the BEV feature map: pooled
// drivable/agent occupancy, route-relative samples, ego state, command
// one-hot. Shared input of the IL decoder, the tree sampler and the RWM.
using SceneFeatures = std::vector<double>;

inline constexpr int kFeatureDim = 256;
inline constexpr int kCommandSlot = 1;  // slots [1,3]: command one-hot

SceneFeatures encode_scene(const sim::Scenario& scenario);

}  // namespace pairplan::scene
