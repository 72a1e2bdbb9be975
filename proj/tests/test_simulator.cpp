#include <doctest.h>

#include <cmath>

#include "pairplan/metrics/metrics.hpp"
#include "pairplan/sim/simulator.hpp"
#include "pairplan/util/errors.hpp"

using namespace pairplan;
using core::Trajectory;
using core::Waypoint;

namespace {

const sim::SimConfig kSim{};
const metrics::MetricsConfig kMetrics{};

double expert_pdms(const sim::Scenario& scenario, const core::Trajectory& traj) {
    const core::Trajectory clean =
        sim::synthesize_expert(scenario, sim::Corruption::kNone, kSim);
    const double ref = sim::rollout(scenario, clean, kSim).progress;
    const sim::SimulationTrace trace = sim::rollout(scenario, traj, kSim);
    return metrics::pdms(metrics::subscores(trace, scenario, ref, kMetrics).base);
}

}  // namespace

TEST_CASE("generate_scenario is deterministic, byte-identical") {
    const sim::Scenario a = sim::generate_scenario(sim::Family::kStraightFollow, 1, kSim);
    const sim::Scenario b = sim::generate_scenario(sim::Family::kStraightFollow, 1, kSim);
    CHECK(sim::scenario_to_json(a) == sim::scenario_to_json(b));
}

TEST_CASE("lead_brake scenarios contain a braking agent reaching zero") {
    for (std::uint64_t seed : {1ull, 2ull, 3ull, 9ull, 77ull}) {
        const sim::Scenario s = sim::generate_scenario(sim::Family::kLeadBrake, seed, kSim);
        REQUIRE(!s.agents.empty());
        bool brakes_to_zero = false;
        for (const auto& agent : s.agents) {
            if (agent.speeds.front() > 0.0 && agent.speeds.back() == 0.0)
                brakes_to_zero = true;
        }
        CHECK(brakes_to_zero);
    }
}

TEST_CASE("red_light red interval overlaps the unconstrained crossing window") {
    const sim::Scenario s = sim::generate_scenario(sim::Family::kRedLight, 7, kSim);
    REQUIRE(s.light.has_value());
    // drive the route at cruise speed, ignoring the light
    const core::Trajectory run =
        sim::synthesize_expert(s, sim::Corruption::kRedLightRun, kSim);
    const sim::SimulationTrace trace = sim::rollout(s, run, kSim);
    REQUIRE(trace.stop_crossing_step.has_value());
    CHECK(s.light->red_at(trace.stop_crossing_step.value()));
}

TEST_CASE("scenario json round trip preserves the world") {
    for (int f = 0; f < sim::kNumFamilies; ++f) {
        const sim::Scenario s =
            sim::generate_scenario(static_cast<sim::Family>(f), 5, kSim);
        const sim::Scenario back = sim::scenario_from_json(sim::scenario_to_json(s));
        CHECK(back.id == s.id);
        CHECK(back.agents.size() == s.agents.size());
        CHECK(back.grid.cells == s.grid.cells);
        CHECK(back.route.s.size() == s.route.s.size());
        CHECK(back.command == s.command);
        CHECK(back.light.has_value() == s.light.has_value());
        // expert survives 6-decimal quantization
        for (std::size_t t = 0; t < s.expert.points.size(); ++t) {
            CHECK(back.expert.points[t].x ==
                  doctest::Approx(s.expert.points[t].x).epsilon(1e-5));
        }
        // re-serialization of the loaded scenario is byte-stable
        CHECK(sim::scenario_to_json(back) ==
              sim::scenario_to_json(sim::scenario_from_json(sim::scenario_to_json(back))));
    }
}

TEST_CASE("check_collision disc conditions") {
    const Waypoint o{0, 0, 0};
    SUBCASE("identical poses collide") {
        CHECK(sim::check_collision(o, 1.0, 0.5, o, 1.0, 0.5));
    }
    SUBCASE("far apart does not") {
        CHECK_FALSE(sim::check_collision(o, 1.0, 0.5, Waypoint{100, 0, 0}, 1.0, 0.5));
    }
    SUBCASE("boundary contact counts as collision (closed condition)") {
        const double r = std::hypot(1.0, 0.5);
        CHECK(sim::check_collision(o, 1.0, 0.5, Waypoint{2.0 * r, 0, 0}, 1.0, 0.5));
        CHECK_FALSE(
            sim::check_collision(o, 1.0, 0.5, Waypoint{2.0 * r + 1e-9, 0, 0}, 1.0, 0.5));
    }
    SUBCASE("non-positive extents are rejected") {
        CHECK_THROWS_AS(sim::check_collision(o, 0.0, 0.5, o, 1.0, 0.5),
                        ContractViolation);
    }
}

TEST_CASE("rollout with no agents: no collisions, min_ttc infinite") {
    sim::Scenario s = sim::generate_scenario(sim::Family::kStraightFollow, 3, kSim);
    s.agents.clear();
    const sim::SimulationTrace trace = sim::rollout(s, s.expert, kSim);
    for (auto c : trace.collision) CHECK(c == 0);
    CHECK(std::isinf(trace.min_ttc));
}

TEST_CASE("rollout flags direct overlap with a static agent") {
    sim::Scenario s = sim::generate_scenario(sim::Family::kStraightFollow, 4, kSim);
    s.agents.clear();
    sim::AgentScript block;
    block.init = Waypoint{10.0, 0.0, 0.0};
    block.speeds.assign(s.expert.points.size(), 0.0);
    s.agents.push_back(block);
    // drive straight through it at cruise speed
    std::vector<core::OffsetStep> offsets(static_cast<std::size_t>(s.horizon()),
                                          core::OffsetStep{4.0, 0, 0});
    const Trajectory through = core::apply_offsets(Waypoint{0, 0, 0}, offsets, s.dt());
    const sim::SimulationTrace trace = sim::rollout(s, through, kSim);
    bool any = false;
    for (auto c : trace.collision) any = any || c != 0;
    CHECK(any);
}

TEST_CASE("min_ttc matches the gap/speed oracle") {
    SUBCASE("agents all receding gives infinity") {
        sim::Scenario s = sim::generate_scenario(sim::Family::kStraightFollow, 6, kSim);
        s.agents.clear();
        sim::AgentScript runner;
        runner.init = Waypoint{12.0, 0.0, 0.0};
        runner.speeds.assign(s.expert.points.size(), 15.0);  // faster than ego
        s.agents.push_back(runner);
        std::vector<core::OffsetStep> offsets(static_cast<std::size_t>(s.horizon()),
                                              core::OffsetStep{2.0, 0, 0});
        const Trajectory slow = core::apply_offsets(Waypoint{0, 0, 0}, offsets, s.dt());
        CHECK(std::isinf(sim::rollout(s, slow, kSim).min_ttc));
    }
    SUBCASE("ego at 10 m/s closing on a static agent 20 m ahead") {
        // single-step window: the measured minimum is the initial-encounter value
        sim::SimConfig short_cfg = kSim;
        short_cfg.horizon_steps = 1;
        sim::Scenario s =
            sim::generate_scenario(sim::Family::kStraightFollow, 8, short_cfg);
        s.agents.clear();
        sim::AgentScript block;
        block.init = Waypoint{20.0, 0.0, 0.0};
        block.speeds.assign(s.expert.points.size(), 0.0);
        s.agents.push_back(block);
        std::vector<core::OffsetStep> offsets(static_cast<std::size_t>(s.horizon()),
                                              core::OffsetStep{5.0, 0, 0});  // 10 m/s
        const Trajectory ego = core::apply_offsets(Waypoint{0, 0, 0}, offsets, s.dt());
        const double ttc = sim::rollout(s, ego, short_cfg).min_ttc;
        CHECK(std::abs(ttc - 2.0) <= 0.5);  // within one dt of the hand value
    }
    SUBCASE("constant closing 5 m/s from a 10 m surface gap") {
        const double radii = 2.0 * std::hypot(1.0, 0.5);
        sim::SimulationTrace trace;
        trace.dt = 0.5;
        trace.ego_radius = radii / 2.0;
        trace.agent_radii = {radii / 2.0};
        trace.ego.resize(3);
        trace.agent_poses.resize(1);
        for (int t = 0; t < 3; ++t) {
            trace.ego[static_cast<std::size_t>(t)] = Waypoint{2.5 * t, 0.0, 0.0};
            trace.agent_poses[0].push_back(Waypoint{10.0 + radii, 0.0, 0.0});
        }
        const double ttc = sim::min_ttc(trace);
        CHECK(std::abs(ttc - 2.0) <= 0.5);
    }
}

TEST_CASE("rollout is pure and agents are ego-independent") {
    const sim::Scenario s = sim::generate_scenario(sim::Family::kLeadBrake, 11, kSim);
    const sim::SimulationTrace t1 = sim::rollout(s, s.expert, kSim);
    const sim::SimulationTrace t2 = sim::rollout(s, s.expert, kSim);
    CHECK(t1.progress == t2.progress);  // bit-exact purity
    CHECK(t1.min_ttc == t2.min_ttc);
    CHECK(t1.route_s == t2.route_s);

    std::vector<core::OffsetStep> offsets(static_cast<std::size_t>(s.horizon()),
                                          core::OffsetStep{1.0, 0.2, 0});
    const Trajectory other = core::apply_offsets(Waypoint{0, 0, 0}, offsets, s.dt());
    const sim::SimulationTrace t3 = sim::rollout(s, other, kSim);
    for (std::size_t a = 0; a < t1.agent_poses.size(); ++a)
        for (std::size_t t = 0; t < t1.agent_poses[a].size(); ++t) {
            CHECK(t3.agent_poses[a][t].x == t1.agent_poses[a][t].x);
            CHECK(t3.agent_poses[a][t].y == t1.agent_poses[a][t].y);
        }
}

TEST_CASE("trajectory leaving the grid is off-drivable, not an error") {
    const sim::Scenario s = sim::generate_scenario(sim::Family::kStraightFollow, 13, kSim);
    std::vector<core::OffsetStep> offsets(static_cast<std::size_t>(s.horizon()),
                                          core::OffsetStep{0.0, -7.0, 0});
    const Trajectory out = core::apply_offsets(Waypoint{0, 0, 0}, offsets, s.dt());
    const sim::SimulationTrace trace = sim::rollout(s, out, kSim);
    bool any = false;
    for (auto v : trace.off_drivable) any = any || v != 0;
    CHECK(any);
}

TEST_CASE("clean experts score well; corruptions hit their targeted sub-score") {
    const sim::Scenario s = sim::generate_scenario(sim::Family::kStraightFollow, 21, kSim);

    SUBCASE("clean expert on straight_follow has nc=1 dac=1") {
        const core::Trajectory clean =
            sim::synthesize_expert(s, sim::Corruption::kNone, kSim);
        const double ref = sim::rollout(s, clean, kSim).progress;
        const auto scores =
            metrics::subscores(sim::rollout(s, clean, kSim), s, ref, kMetrics);
        CHECK(scores.base.nc == 1.0);
        CHECK(scores.base.dac == 1.0);
    }
    SUBCASE("offroad drift leaves the drivable area") {
        const core::Trajectory bad =
            sim::synthesize_expert(s, sim::Corruption::kOffroadDrift, kSim);
        const sim::SimulationTrace trace = sim::rollout(s, bad, kSim);
        bool any = false;
        for (auto v : trace.off_drivable) any = any || v != 0;
        CHECK(any);
    }
    SUBCASE("slow progress strictly lowers EP against the clean reference") {
        const core::Trajectory clean =
            sim::synthesize_expert(s, sim::Corruption::kNone, kSim);
        const core::Trajectory slow =
            sim::synthesize_expert(s, sim::Corruption::kSlowProgress, kSim);
        const double ref = sim::rollout(s, clean, kSim).progress;
        const auto sc_clean =
            metrics::subscores(sim::rollout(s, clean, kSim), s, ref, kMetrics);
        const auto sc_slow =
            metrics::subscores(sim::rollout(s, slow, kSim), s, ref, kMetrics);
        CHECK(sc_slow.base.ep < sc_clean.base.ep);
    }
    SUBCASE("red light run zeroes TLC where the clean expert keeps it") {
        const sim::Scenario rl = sim::generate_scenario(sim::Family::kRedLight, 31, kSim);
        const core::Trajectory clean =
            sim::synthesize_expert(rl, sim::Corruption::kNone, kSim);
        const core::Trajectory run =
            sim::synthesize_expert(rl, sim::Corruption::kRedLightRun, kSim);
        const double ref = sim::rollout(rl, clean, kSim).progress;
        const auto sc_clean =
            metrics::subscores(sim::rollout(rl, clean, kSim), rl, ref, kMetrics);
        const auto sc_run =
            metrics::subscores(sim::rollout(rl, run, kSim), rl, ref, kMetrics);
        CHECK(sc_clean.tlc == 1.0);
        CHECK(sc_run.tlc == 0.0);
    }
}

TEST_CASE("clean experts reach PDMS >= 0.9 in at least 95% of scenarios" *
          doctest::timeout(300)) {
    int total = 0, good = 0;
    for (int f = 0; f < sim::kNumFamilies; ++f) {
        for (std::uint64_t seed = 0; seed < 100; ++seed) {
            const sim::Scenario s =
                sim::generate_scenario(static_cast<sim::Family>(f), seed, kSim);
            const double score = expert_pdms(s, s.expert);
            ++total;
            if (score >= 0.9) ++good;
        }
    }
    CHECK(total == 500);
    CHECK(static_cast<double>(good) / total >= 0.95);
}
