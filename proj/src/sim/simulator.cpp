#include "pairplan/sim/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "pairplan/util/errors.hpp"
#include "pairplan/util/rng.hpp"

namespace pairplan::sim {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kPi = 3.141592653589793238462643383279502884;

double disc_radius(double half_x, double half_y) { return std::hypot(half_x, half_y); }

// Route corridor rasterization: a cell is drivable when its center projects
// onto the route within the lateral corridor and the longitudinal extent.
DrivableGrid rasterize_corridor(const RoutePolyline& route, const SimConfig& cfg) {
    DrivableGrid grid;
    grid.origin_x = cfg.grid_origin_x;
    grid.origin_y = cfg.grid_origin_y;
    grid.cell_size = cfg.grid_cell;
    grid.width = cfg.grid_width;
    grid.height = cfg.grid_height;
    grid.cells.assign(static_cast<std::size_t>(grid.width) *
                          static_cast<std::size_t>(grid.height),
                      0);
    for (int iy = 0; iy < grid.height; ++iy) {
        const double cy = grid.origin_y + (iy + 0.5) * grid.cell_size;
        for (int ix = 0; ix < grid.width; ++ix) {
            const double cx = grid.origin_x + (ix + 0.5) * grid.cell_size;
            const RouteProjection proj = route.project(cx, cy);
            if (proj.lateral >= cfg.corridor_lo - 1e-9 &&
                proj.lateral <= cfg.corridor_hi + 1e-9 && proj.s > 1e-9 &&
                proj.s < route.length() - 1e-9) {
                grid.cells[static_cast<std::size_t>(iy) *
                               static_cast<std::size_t>(grid.width) +
                           static_cast<std::size_t>(ix)] = 1;
            }
        }
    }
    return grid;
}

bool footprint_on_grid(const DrivableGrid& grid, const core::Waypoint& pose,
                       double half_x, double half_y) {
    const double c = std::cos(pose.h);
    const double s = std::sin(pose.h);
    const double px[5] = {0.0, half_x, half_x, -half_x, -half_x};
    const double py[5] = {0.0, half_y, -half_y, half_y, -half_y};
    for (int i = 0; i < 5; ++i) {
        const double wx = pose.x + c * px[i] - s * py[i];
        const double wy = pose.y + s * px[i] + c * py[i];
        if (!grid.drivable_at(wx, wy)) return false;
    }
    return true;
}

struct LeadInfo {
    bool present = false;
    double surface_gap = 0.0;   // along-route center gap minus body halves
    double speed = 0.0;         // lead along-route speed
    double next_gap = 0.0;      // gap one step ahead (agents are scripted)
    double next_speed = 0.0;
    double stop_s = kInf;       // smallest future along-route position
};

// Nearest same-direction agent ahead of ego_s within half a lane of
// `ego_lateral`; looks one scripted step ahead and at the lead's eventual
// stopping point.
LeadInfo lead_ahead(const Scenario& scenario,
                    const std::vector<std::vector<core::Waypoint>>& agent_poses,
                    int step, double ego_s, double ego_lateral, const SimConfig& cfg) {
    LeadInfo lead;
    double best_gap = kInf;
    const int last = static_cast<int>(agent_poses.empty() ? 0 : agent_poses[0].size()) - 1;
    for (std::size_t a = 0; a < scenario.agents.size(); ++a) {
        const core::Waypoint& pose = agent_poses[a][static_cast<std::size_t>(step)];
        const RouteProjection proj = scenario.route.project(pose.x, pose.y);
        if (std::abs(proj.lateral - ego_lateral) > cfg.lane_width * 0.5) continue;
        if (std::cos(pose.h - proj.tangent_h) < 0.0) continue;  // oncoming
        if (proj.s <= ego_s) continue;
        const double halves = scenario.agents[a].half_x + scenario.ego_half_x;
        const double gap = proj.s - ego_s - halves;
        if (gap >= best_gap) continue;
        best_gap = gap;
        lead.present = true;
        lead.surface_gap = gap;
        const double heading_factor = std::max(0.0, std::cos(pose.h - proj.tangent_h));
        lead.speed =
            scenario.agents[a].speeds[static_cast<std::size_t>(step)] * heading_factor;

        const int next = std::min(step + 1, last);
        const core::Waypoint& next_pose = agent_poses[a][static_cast<std::size_t>(next)];
        const RouteProjection next_proj =
            scenario.route.project(next_pose.x, next_pose.y);
        lead.next_gap = next_proj.s - ego_s - halves;
        lead.next_speed =
            scenario.agents[a].speeds[static_cast<std::size_t>(next)] * heading_factor;

        // leads that stop within the horizon pin a hard stopping point
        const double final_speed =
            scenario.agents[a].speeds[static_cast<std::size_t>(last)] * heading_factor;
        if (final_speed < 0.3) {
            const core::Waypoint& p = agent_poses[a][static_cast<std::size_t>(last)];
            lead.stop_s = scenario.route.project(p.x, p.y).s - halves;
        } else {
            lead.stop_s = kInf;
        }
    }
    return lead;
}

struct ExpertPlanInputs {
    double cruise_speed = 0.0;
    bool obey_light = true;
    bool allow_lane_change = false;
};

// Jerk- and accel-limited longitudinal rule planner with a lateral lane-offset
// plan; emits the T+1 demonstration waypoints in the route frame.
core::Trajectory plan_rule_trajectory(const Scenario& scenario, const SimConfig& cfg,
                                      const ExpertPlanInputs& inputs,
                                      Corruption corruption) {
    const int T = cfg.horizon_steps;
    const double dt = cfg.dt;
    const auto agent_poses = script_agent_poses(scenario, T, dt);

    const RouteProjection start =
        scenario.route.project(scenario.ego_init.x, scenario.ego_init.y);
    double s = start.s;
    double lateral = start.lateral;
    double v = scenario.ego_speed;
    double accel_prev = 0.0;

    bool changing = false;
    int change_step = -1;
    const int change_duration = 5;  // steps for the cosine lane ramp

    std::vector<double> s_seq{s};
    std::vector<double> lat_seq{lateral};

    const double brake_eff = 0.85 * cfg.plan_brake_cap;  // stopping-envelope decel
    for (int t = 0; t < T; ++t) {
        double v_des = inputs.cruise_speed;

        const LeadInfo lead = lead_ahead(scenario, agent_poses, t, s, lateral, cfg);
        if (lead.present) {
            if (inputs.allow_lane_change && !changing && lead.surface_gap < 16.0 &&
                lead.speed < 0.5 * inputs.cruise_speed) {
                changing = true;
                change_step = t;
            }
            const double v_follow =
                std::max(0.0, 0.8 * (lead.next_gap - cfg.min_gap) / cfg.headway_time +
                                  0.75 * lead.next_speed);
            v_des = std::min(v_des, v_follow);
            if (std::isfinite(lead.stop_s)) {
                const double dist = lead.stop_s - cfg.min_gap - s;
                v_des = std::min(v_des,
                                 std::sqrt(std::max(0.0, 2.0 * brake_eff * dist)));
            }
        }

        if (inputs.obey_light && scenario.light.has_value()) {
            const TrafficLight& light = scenario.light.value();
            const double dist = light.stop_line_s - 1.0 - s;
            if (t <= light.red_end && dist > 0.05) {
                const double v_stop = std::sqrt(std::max(0.0, 2.0 * brake_eff * dist));
                v_des = std::min(v_des, v_stop);
            } else if (t <= light.red_end && dist <= 0.05) {
                v_des = 0.0;  // holding at the line on red
            }
        }

        double accel =
            std::clamp((v_des - v) / dt, -cfg.plan_brake_cap, cfg.plan_accel_cap);
        accel = std::clamp(accel, accel_prev - cfg.plan_jerk_cap * dt,
                           accel_prev + cfg.plan_jerk_cap * dt);
        const double v_next = std::max(0.0, v + accel * dt);
        accel_prev = (v_next - v) / dt;
        v = v_next;

        double lane_target = 0.0;
        if (changing) {
            const double phase = std::clamp(
                static_cast<double>(t + 1 - change_step) / change_duration, 0.0, 1.0);
            lane_target = cfg.lane_width * 0.5 * (1.0 - std::cos(phase * kPi));
        }
        const double max_dlat = 2.0 * dt;
        const double dlat = std::clamp(lane_target - lateral, -max_dlat, max_dlat);
        lateral += dlat;

        const double step_len = v * dt;
        const double along = std::sqrt(std::max(0.0, step_len * step_len - dlat * dlat));
        s += along;
        s_seq.push_back(s);
        lat_seq.push_back(lateral);
    }

    if (corruption == Corruption::kOffroadDrift) {
        // ramp off the right-hand corridor edge over the back two thirds
        const int start_step = T / 3 + 1;
        const double target = cfg.corridor_lo - 1.6;
        for (int t = start_step; t <= T; ++t) {
            const double phase =
                static_cast<double>(t - start_step) / std::max(1, T - start_step);
            lat_seq[static_cast<std::size_t>(t)] =
                lat_seq[static_cast<std::size_t>(t)] * (1.0 - phase) + target * phase;
        }
    }

    core::Trajectory traj;
    traj.dt = dt;
    traj.points.resize(static_cast<std::size_t>(T) + 1);
    for (int t = 0; t <= T; ++t) {
        double px, py, tx, ty;
        scenario.route.frame_at(s_seq[static_cast<std::size_t>(t)], px, py, tx, ty);
        const double lat = lat_seq[static_cast<std::size_t>(t)];
        // left normal of the tangent is (-ty, tx)
        traj.points[static_cast<std::size_t>(t)] =
            core::Waypoint{px - ty * lat, py + tx * lat, 0.0};
    }
    double last_h = scenario.ego_init.h;
    for (int t = 0; t <= T; ++t) {
        if (t < T) {
            const auto& a = traj.points[static_cast<std::size_t>(t)];
            const auto& b = traj.points[static_cast<std::size_t>(t) + 1];
            if (std::hypot(b.x - a.x, b.y - a.y) > 1e-6)
                last_h = std::atan2(b.y - a.y, b.x - a.x);
        }
        traj.points[static_cast<std::size_t>(t)].h = core::normalize_angle(last_h);
    }
    traj.points[0] =
        core::Waypoint{scenario.ego_init.x, scenario.ego_init.y, scenario.ego_init.h};
    return traj;
}

}  // namespace

bool check_collision(const core::Waypoint& pose_a, double half_ax, double half_ay,
                     const core::Waypoint& pose_b, double half_bx, double half_by) {
    if (!(half_ax > 0.0 && half_ay > 0.0 && half_bx > 0.0 && half_by > 0.0))
        throw ContractViolation("footprint half-extents must be positive");
    const double d = std::hypot(pose_a.x - pose_b.x, pose_a.y - pose_b.y);
    return d <= disc_radius(half_ax, half_ay) + disc_radius(half_bx, half_by);
}

double min_ttc(const SimulationTrace& trace, double eps_v) {
    // Collision-course time per (step, agent): smallest t with
    // |dp + t*dv| = radii sum under the current relative velocity. Pairs whose
    // course passes clear contribute nothing; for a head-on approach this is
    // exactly (center gap - radii) / closing speed.
    double best = kInf;
    const int steps = static_cast<int>(trace.ego.size());
    for (std::size_t a = 0; a < trace.agent_poses.size(); ++a) {
        const double radii = trace.ego_radius + trace.agent_radii[a];
        for (int t = 0; t + 1 < steps; ++t) {
            const auto& e0 = trace.ego[static_cast<std::size_t>(t)];
            const auto& p0 = trace.agent_poses[a][static_cast<std::size_t>(t)];
            const auto& e1 = trace.ego[static_cast<std::size_t>(t) + 1];
            const auto& p1 = trace.agent_poses[a][static_cast<std::size_t>(t) + 1];
            const double dpx = p0.x - e0.x;
            const double dpy = p0.y - e0.y;
            const double dvx = ((p1.x - p0.x) - (e1.x - e0.x)) / trace.dt;
            const double dvy = ((p1.y - p0.y) - (e1.y - e0.y)) / trace.dt;

            const double c = dpx * dpx + dpy * dpy - radii * radii;
            if (c <= 0.0) {
                best = 0.0;  // already overlapping
                continue;
            }
            const double a2 = dvx * dvx + dvy * dvy;
            const double b = 2.0 * (dpx * dvx + dpy * dvy);
            if (b >= 0.0) continue;               // receding
            if (a2 < eps_v * eps_v) continue;     // effectively static
            const double disc = b * b - 4.0 * a2 * c;
            if (disc < 0.0) continue;             // course passes clear
            const double root = (-b - std::sqrt(disc)) / (2.0 * a2);
            if (root >= 0.0) best = std::min(best, root);
        }
    }
    return best;
}

std::vector<std::vector<core::Waypoint>> script_agent_poses(const Scenario& scenario,
                                                            int steps, double dt) {
    std::vector<std::vector<core::Waypoint>> poses(scenario.agents.size());
    for (std::size_t a = 0; a < scenario.agents.size(); ++a) {
        const AgentScript& agent = scenario.agents[a];
        std::vector<core::Waypoint> seq;
        seq.reserve(static_cast<std::size_t>(steps) + 1);
        core::Waypoint pose = agent.init;
        seq.push_back(pose);
        const double c = std::cos(pose.h);
        const double s = std::sin(pose.h);
        for (int t = 0; t < steps; ++t) {
            const double v = agent.speeds[static_cast<std::size_t>(t)];
            pose.x += c * v * dt;
            pose.y += s * v * dt;
            seq.push_back(pose);
        }
        poses[a] = std::move(seq);
    }
    return poses;
}

Scenario generate_scenario(Family family, std::uint64_t seed, const SimConfig& cfg) {
    util::Rng rng(util::derive_seed(seed, static_cast<std::uint64_t>(family) + 101));
    const int T = cfg.horizon_steps;
    const double dt = cfg.dt;

    Scenario scenario;
    scenario.family = family;
    scenario.corruption = Corruption::kNone;
    scenario.id = std::string(family_name(family)) + "_" + std::to_string(seed);
    scenario.ego_init = core::Waypoint{0.0, 0.0, 0.0};
    scenario.ego_half_x = cfg.ego_half_x;
    scenario.ego_half_y = cfg.ego_half_y;
    scenario.command = core::DrivingCommand::kStraight;

    std::vector<std::pair<double, double>> pts;
    if (family == Family::kTurn) {
        const bool left = rng.uniform() < 0.5;
        scenario.command =
            left ? core::DrivingCommand::kTurnLeft : core::DrivingCommand::kTurnRight;
        const double straight = rng.uniform(10.0, 16.0);
        const double radius = rng.uniform(12.0, 18.0);
        const double sign = left ? 1.0 : -1.0;
        for (double x = -8.0; x < straight; x += 1.0) pts.emplace_back(x, 0.0);
        const int arc_steps = 36;
        for (int i = 0; i <= arc_steps; ++i) {
            const double ang = (static_cast<double>(i) / arc_steps) * 0.5 * kPi;
            pts.emplace_back(straight + radius * std::sin(ang),
                             sign * radius * (1.0 - std::cos(ang)));
        }
        const double end_x = straight + radius;
        for (double off = 1.0; off < 14.0; off += 1.0)
            pts.emplace_back(end_x, sign * (radius + off));
    } else {
        for (double x = -8.0; x <= 56.0; x += 1.0) pts.emplace_back(x, 0.0);
    }
    scenario.route = RoutePolyline::from_points(pts);

    scenario.ego_speed = rng.uniform(6.5, 10.5);
    const std::size_t profile_len = static_cast<std::size_t>(T) + 1;

    switch (family) {
        case Family::kStraightFollow: {
            AgentScript lead;
            const double gap = rng.uniform(18.0, 28.0);
            lead.init = core::Waypoint{gap, 0.0, 0.0};
            lead.speeds.assign(profile_len, scenario.ego_speed * rng.uniform(0.85, 1.1));
            scenario.agents.push_back(lead);
            if (rng.uniform() < 0.5) {
                AgentScript oncoming;
                oncoming.init =
                    core::Waypoint{rng.uniform(30.0, 45.0), cfg.lane_width, kPi};
                oncoming.speeds.assign(profile_len, rng.uniform(5.0, 8.0));
                scenario.agents.push_back(oncoming);
            }
            break;
        }
        case Family::kLeadBrake: {
            AgentScript lead;
            const double gap = rng.uniform(17.0, 26.0);
            lead.init = core::Waypoint{gap, 0.0, 0.0};
            double v = scenario.ego_speed * rng.uniform(0.9, 1.05);
            const double brake = rng.uniform(2.5, 3.8);
            const int start = rng.uniform_int(0, 2);
            lead.speeds.assign(profile_len, 0.0);
            for (std::size_t t = 0; t < profile_len; ++t) {
                lead.speeds[t] = v;
                if (static_cast<int>(t) >= start) v = std::max(0.0, v - brake * dt);
            }
            scenario.agents.push_back(lead);
            break;
        }
        case Family::kLaneChange: {
            AgentScript blocker;
            const double gap = rng.uniform(14.0, 20.0);
            blocker.init = core::Waypoint{gap, rng.uniform(-0.3, 0.3), 0.0};
            blocker.speeds.assign(profile_len, rng.uniform(0.0, 1.2));
            scenario.agents.push_back(blocker);
            break;
        }
        case Family::kTurn: {
            if (rng.uniform() < 0.5) {
                AgentScript lead;
                const double gap = rng.uniform(20.0, 26.0);
                lead.init =
                    scenario.route.point_at(scenario.route.project(0.0, 0.0).s + gap);
                lead.speeds.assign(profile_len,
                                   scenario.ego_speed * rng.uniform(0.9, 1.05));
                scenario.agents.push_back(lead);
            }
            break;
        }
        case Family::kRedLight: {
            scenario.ego_speed = rng.uniform(5.0, 6.5);
            const double s0 = scenario.route.project(0.0, 0.0).s;
            // near enough that an unconstrained cruise crosses inside the
            // horizon, far enough that a comfort-bounded stop is feasible
            const double reach = 0.85 * scenario.ego_speed * T * dt;
            const double stop_s = s0 + rng.uniform(17.0, std::max(18.0, reach));
            const double eta_steps = (stop_s - s0) / scenario.ego_speed / dt;
            const int red_end =
                std::min(T, static_cast<int>(eta_steps) + rng.uniform_int(1, 3));
            scenario.light = TrafficLight{stop_s, 0, red_end};
            break;
        }
    }

    scenario.grid = rasterize_corridor(scenario.route, cfg);

    // placeholder expert so the planner can query scenario state
    scenario.expert.dt = dt;
    scenario.expert.points.assign(profile_len, scenario.ego_init);
    scenario.expert = synthesize_expert(scenario, Corruption::kNone, cfg);
    validate_scenario(scenario);
    return scenario;
}

core::Trajectory synthesize_expert(const Scenario& scenario, Corruption corruption,
                                   const SimConfig& cfg) {
    ExpertPlanInputs inputs;
    inputs.cruise_speed = scenario.ego_speed;
    inputs.obey_light = corruption != Corruption::kRedLightRun;
    inputs.allow_lane_change = scenario.family == Family::kLaneChange;
    if (corruption == Corruption::kSlowProgress) inputs.cruise_speed *= 0.35;
    return plan_rule_trajectory(scenario, cfg, inputs, corruption);
}

SimulationTrace rollout(const Scenario& scenario, const core::Trajectory& trajectory,
                        const SimConfig& cfg) {
    const int T = trajectory.horizon();
    const double dt = trajectory.dt;
    const std::size_t len = static_cast<std::size_t>(T) + 1;

    SimulationTrace trace;
    trace.dt = dt;
    trace.ego = trajectory.points;
    trace.agent_poses = script_agent_poses(scenario, T, dt);
    trace.ego_radius = disc_radius(scenario.ego_half_x, scenario.ego_half_y);
    for (const auto& agent : scenario.agents)
        trace.agent_radii.push_back(disc_radius(agent.half_x, agent.half_y));

    trace.collision.assign(len, 0);
    trace.off_drivable.assign(len, 0);
    trace.lateral_dev.assign(len, 0.0);
    trace.route_s.assign(len, 0.0);
    trace.route_tangent_h.assign(len, 0.0);

    for (std::size_t t = 0; t < len; ++t) {
        const core::Waypoint& ego = trace.ego[t];
        for (std::size_t a = 0; a < scenario.agents.size(); ++a) {
            if (check_collision(ego, scenario.ego_half_x, scenario.ego_half_y,
                                trace.agent_poses[a][t], scenario.agents[a].half_x,
                                scenario.agents[a].half_y)) {
                trace.collision[t] = 1;
                break;
            }
        }
        if (!footprint_on_grid(scenario.grid, ego, scenario.ego_half_x,
                               scenario.ego_half_y))
            trace.off_drivable[t] = 1;
        const RouteProjection proj = scenario.route.project(ego.x, ego.y);
        trace.lateral_dev[t] = std::abs(proj.lateral);
        trace.route_s[t] = proj.s;
        trace.route_tangent_h[t] = proj.tangent_h;
    }

    trace.speed.assign(len, 0.0);
    for (std::size_t t = 0; t + 1 < len; ++t) {
        const auto& a = trace.ego[t];
        const auto& b = trace.ego[t + 1];
        trace.speed[t] = std::hypot(b.x - a.x, b.y - a.y) / dt;
    }
    if (len >= 2) trace.speed[len - 1] = trace.speed[len - 2];

    trace.accel.assign(len, 0.0);
    for (std::size_t t = 0; t + 2 < len; ++t)
        trace.accel[t] = (trace.speed[t + 1] - trace.speed[t]) / dt;
    if (len >= 3) {
        trace.accel[len - 2] = trace.accel[len - 3];
        trace.accel[len - 1] = trace.accel[len - 3];
    }

    trace.jerk.assign(len, 0.0);
    for (std::size_t t = 0; t + 3 < len; ++t)
        trace.jerk[t] = (trace.accel[t + 1] - trace.accel[t]) / dt;
    if (len >= 4) {
        trace.jerk[len - 3] = trace.jerk[len - 4];
        trace.jerk[len - 2] = trace.jerk[len - 4];
        trace.jerk[len - 1] = trace.jerk[len - 4];
    }

    if (scenario.light.has_value()) {
        for (std::size_t t = 0; t < len; ++t) {
            if (trace.route_s[t] >= scenario.light->stop_line_s) {
                trace.stop_crossing_step = static_cast<int>(t);
                break;
            }
        }
    }

    trace.progress = trace.route_s[len - 1] - trace.route_s[0];
    trace.min_ttc = min_ttc(trace, cfg.eps_v);
    return trace;
}

}  // namespace pairplan::sim
