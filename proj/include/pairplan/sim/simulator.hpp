#pragma once

#include <optional>
#include <vector>

#include "pairplan/sim/scenario.hpp"

namespace pairplan::sim {

struct SimConfig {
    int horizon_steps = 8;   // T; must be even for the stride-2 tree stages
    double dt = 0.5;
    double v_max = 15.0;
    double lane_width = 3.5;
    double corridor_lo = -1.75;  // drivable band around the centerline
    double corridor_hi = 5.25;   // ego lane plus one passing lane
    double grid_cell = 0.5;
    int grid_width = 128;
    int grid_height = 128;
    double grid_origin_x = -12.0;
    double grid_origin_y = -32.0;
    double ego_half_x = 1.0;
    double ego_half_y = 0.5;
    // Expert rule-planner envelopes; kept inside the comfort metric bounds.
    double plan_accel_cap = 2.0;
    double plan_brake_cap = 2.6;
    double plan_jerk_cap = 4.5;
    double headway_time = 1.3;
    double min_gap = 3.0;
    double eps_v = 0.1;  // TTC closing-speed floor
};

// All per-step lists have length T+1.
struct SimulationTrace {
    std::vector<core::Waypoint> ego;
    std::vector<std::vector<core::Waypoint>> agent_poses;  // [agent][step]
    std::vector<std::uint8_t> collision;
    std::vector<std::uint8_t> off_drivable;
    std::vector<double> lateral_dev;
    std::vector<double> route_s;
    std::vector<double> route_tangent_h;
    std::vector<double> speed;  // |p_{t+1}-p_t|/dt, padded at the end
    std::vector<double> accel;
    std::vector<double> jerk;
    std::optional<int> stop_crossing_step;
    double progress = 0.0;
    double min_ttc = 0.0;
    // footprint/geometry context so min_ttc stays recomputable from the trace
    double ego_radius = 0.0;
    std::vector<double> agent_radii;
    double dt = 0.5;
};

// Conservative disc approximation over the footprint diagonals; the boundary
// counts as a collision (closed condition).
bool check_collision(const core::Waypoint& pose_a, double half_ax, double half_ay,
                     const core::Waypoint& pose_b, double half_bx, double half_by);

// min over steps and agents of (center gap - radii sum) / max(closing, eps_v),
// +infinity when no agent is ever closing.
double min_ttc(const SimulationTrace& trace, double eps_v = 0.1);

// Deterministic synthetic world for (family, seed, config). The embedded
// expert is the clean rule-based demonstration.
Scenario generate_scenario(Family family, std::uint64_t seed, const SimConfig& config);

// Rule-based demonstration for the scenario; `corruption` selects the
// suboptimal-human variant. Ignores scenario.expert.
core::Trajectory synthesize_expert(const Scenario& scenario, Corruption corruption,
                                   const SimConfig& config);

// Non-reactive closed-loop evaluation of a T+1 trajectory. Pure function.
SimulationTrace rollout(const Scenario& scenario, const core::Trajectory& trajectory,
                        const SimConfig& config);

// Scripted agent poses, independent of the ego trajectory.
std::vector<std::vector<core::Waypoint>> script_agent_poses(const Scenario& scenario,
                                                            int steps, double dt);

}  // namespace pairplan::sim
