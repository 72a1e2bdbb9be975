#include "pairplan/scene/features.hpp"

#include <algorithm>
#include <cmath>

#include "pairplan/core/types.hpp"

namespace pairplan::scene {

namespace {

// Pooling window in the ego frame, 8x8 cells.
constexpr double kPoolX0 = -4.0, kPoolX1 = 44.0;
constexpr double kPoolY0 = -16.0, kPoolY1 = 16.0;
constexpr int kPool = 8;
constexpr int kRouteSamples = 16;
constexpr double kRouteStride = 2.5;

int pool_index(double x, double y) {
    if (x < kPoolX0 || x >= kPoolX1 || y < kPoolY0 || y >= kPoolY1) return -1;
    const int ix = static_cast<int>((x - kPoolX0) / (kPoolX1 - kPoolX0) * kPool);
    const int iy = static_cast<int>((y - kPoolY0) / (kPoolY1 - kPoolY0) * kPool);
    return iy * kPool + ix;
}

}  // namespace

SceneFeatures encode_scene(const sim::Scenario& scenario) {
    SceneFeatures f(kFeatureDim, 0.0);
    const core::Waypoint ego = scenario.ego_init;
    const sim::RouteProjection ego_proj = scenario.route.project(ego.x, ego.y);
    const int T = scenario.horizon();

    f[0] = scenario.ego_speed / 10.0;
    f[static_cast<std::size_t>(kCommandSlot + static_cast<int>(scenario.command))] = 1.0;

    if (scenario.light.has_value()) {
        f[4] = 1.0;
        f[5] = std::clamp((scenario.light->stop_line_s - ego_proj.s) / 50.0, -1.0, 2.0);
        f[6] =
            static_cast<double>(scenario.light->red_end - scenario.light->red_start + 1) /
            static_cast<double>(T + 1);
    }
    f[7] = std::clamp((scenario.route.length() - ego_proj.s) / 50.0, 0.0, 2.0);

    // route-relative lookahead samples
    for (int k = 0; k < kRouteSamples; ++k) {
        const double s = ego_proj.s + (k + 1) * kRouteStride;
        const core::Waypoint wp = scenario.route.point_at(s);
        const core::Waypoint local = core::to_ego_frame(wp, ego);
        f[static_cast<std::size_t>(8 + 3 * k + 0)] = local.y / 10.0;
        f[static_cast<std::size_t>(8 + 3 * k + 1)] = std::sin(local.h);
        f[static_cast<std::size_t>(8 + 3 * k + 2)] = std::cos(local.h);
    }

    // drivable-area pooling: fraction of drivable raster cells per pool cell
    std::vector<double> hits(kPool * kPool, 0.0);
    std::vector<double> total(kPool * kPool, 0.0);
    const sim::DrivableGrid& grid = scenario.grid;
    for (int iy = 0; iy < grid.height; ++iy) {
        for (int ix = 0; ix < grid.width; ++ix) {
            const double wx = grid.origin_x + (ix + 0.5) * grid.cell_size;
            const double wy = grid.origin_y + (iy + 0.5) * grid.cell_size;
            const core::Waypoint local =
                core::to_ego_frame(core::Waypoint{wx, wy, 0.0}, ego);
            const int pi = pool_index(local.x, local.y);
            if (pi < 0) continue;
            total[static_cast<std::size_t>(pi)] += 1.0;
            if (grid.cells[static_cast<std::size_t>(iy) *
                               static_cast<std::size_t>(grid.width) +
                           static_cast<std::size_t>(ix)])
                hits[static_cast<std::size_t>(pi)] += 1.0;
        }
    }
    for (int i = 0; i < kPool * kPool; ++i)
        f[static_cast<std::size_t>(56 + i)] =
            total[static_cast<std::size_t>(i)] > 0.0
                ? hits[static_cast<std::size_t>(i)] / total[static_cast<std::size_t>(i)]
                : 0.0;

    // agent occupancy and longitudinal relative speed at t=0
    for (const auto& agent : scenario.agents) {
        const core::Waypoint local = core::to_ego_frame(agent.init, ego);
        const int pi = pool_index(local.x, local.y);
        if (pi < 0) continue;
        f[static_cast<std::size_t>(120 + pi)] = 1.0;
        const double v_long = agent.speeds.front() * std::cos(agent.init.h - ego.h);
        f[static_cast<std::size_t>(184 + pi)] = (v_long - scenario.ego_speed) / 10.0;
    }
    return f;
}

}  // namespace pairplan::scene
