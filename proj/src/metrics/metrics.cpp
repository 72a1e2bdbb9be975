#include "pairplan/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "pairplan/util/errors.hpp"

namespace pairplan::metrics {

namespace {

void require_unit(double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0))
        throw ContractViolation(std::string("sub-score out of [0,1]: ") + name);
}

bool comfort_ok(const std::vector<double>& speeds, double dt, const MetricsConfig& cfg) {
    // speeds: one value per motion step; accel/jerk by central stencils
    std::vector<double> accel;
    for (std::size_t i = 0; i + 1 < speeds.size(); ++i)
        accel.push_back((speeds[i + 1] - speeds[i]) / dt);
    for (double a : accel)
        if (std::abs(a) > cfg.a_max) return false;
    for (std::size_t i = 0; i + 1 < accel.size(); ++i)
        if (std::abs((accel[i + 1] - accel[i]) / dt) > cfg.j_max) return false;
    return true;
}

}  // namespace

ExtendedSubScores subscores(const sim::SimulationTrace& trace,
                            const sim::Scenario& scenario, double reference_progress,
                            const MetricsConfig& cfg) {
    const std::size_t len = trace.ego.size();
    ExtendedSubScores s;

    bool any_collision = false;
    bool any_offroad = false;
    for (std::size_t t = 0; t < len; ++t) {
        any_collision = any_collision || trace.collision[t] != 0;
        any_offroad = any_offroad || trace.off_drivable[t] != 0;
    }
    s.base.nc = any_collision ? 0.0 : 1.0;
    s.base.dac = any_offroad ? 0.0 : 1.0;

    const double ref = std::max(reference_progress, cfg.eps_p);
    s.base.ep = std::clamp(trace.progress / ref, 0.0, 1.0);

    s.base.ttc = trace.min_ttc >= cfg.ttc_threshold ? 1.0 : 0.0;

    // motion-step speeds (drop the padded tail sample)
    std::vector<double> speeds(trace.speed.begin(), trace.speed.end() - 1);
    s.base.comfort = comfort_ok(speeds, trace.dt, cfg) ? 1.0 : 0.0;

    bool direction_ok = true;
    for (std::size_t t = 0; t < len; ++t) {
        if (trace.speed[std::min(t, len - 2)] < 0.2) continue;  // holding still
        if (std::cos(trace.ego[t].h - trace.route_tangent_h[t]) < 0.0) {
            direction_ok = false;
            break;
        }
    }
    s.ddc = direction_ok ? 1.0 : 0.0;

    s.tlc = 1.0;
    if (scenario.light.has_value() && trace.stop_crossing_step.has_value() &&
        scenario.light->red_at(trace.stop_crossing_step.value()))
        s.tlc = 0.0;

    std::size_t kept = 0;
    for (std::size_t t = 0; t < len; ++t)
        if (trace.lateral_dev[t] <= cfg.lane_half_width) ++kept;
    s.lk = static_cast<double>(kept) / static_cast<double>(len);

    // history comfort: prepend one step at the scenario's initial speed
    std::vector<double> hist_speeds;
    hist_speeds.push_back(scenario.ego_speed);
    hist_speeds.insert(hist_speeds.end(), speeds.begin(), speeds.end());
    s.hc = comfort_ok(hist_speeds, trace.dt, cfg) ? 1.0 : 0.0;

    s.ec = 1.0;  // single-shot planning: no cross-replan change to penalize
    return s;
}

HumanMask human_mask(const ExtendedSubScores& expert_scores) {
    HumanMask mask;
    mask.nc = expert_scores.base.nc == 0.0;
    mask.dac = expert_scores.base.dac == 0.0;
    mask.ddc = expert_scores.ddc == 0.0;
    mask.tlc = expert_scores.tlc == 0.0;
    return mask;
}

double pdms(const SubScores& s) {
    require_unit(s.nc, "nc");
    require_unit(s.dac, "dac");
    require_unit(s.ep, "ep");
    require_unit(s.ttc, "ttc");
    require_unit(s.comfort, "comfort");
    return s.nc * s.dac * (5.0 * s.ep + 5.0 * s.ttc + 2.0 * s.comfort) / 12.0;
}

double epdms(const ExtendedSubScores& s, const HumanMask& mask) {
    require_unit(s.base.nc, "nc");
    require_unit(s.base.dac, "dac");
    require_unit(s.base.ep, "ep");
    require_unit(s.base.ttc, "ttc");
    require_unit(s.ddc, "ddc");
    require_unit(s.tlc, "tlc");
    require_unit(s.lk, "lk");
    require_unit(s.hc, "hc");
    require_unit(s.ec, "ec");
    const double nc = mask.nc ? 1.0 : s.base.nc;
    const double dac = mask.dac ? 1.0 : s.base.dac;
    const double ddc = mask.ddc ? 1.0 : s.ddc;
    const double tlc = mask.tlc ? 1.0 : s.tlc;
    const double weighted = (5.0 * s.base.ep + 5.0 * s.base.ttc + 2.0 * s.lk +
                             2.0 * s.hc + 2.0 * s.ec) /
                            16.0;
    return nc * dac * ddc * tlc * weighted;
}

}  // namespace pairplan::metrics
