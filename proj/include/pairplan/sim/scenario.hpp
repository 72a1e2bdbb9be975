#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pairplan/core/types.hpp"

namespace pairplan::sim {

// Scripted, non-reactive traffic participant. Moves along its initial heading
// at speeds[t] during step t; heading never changes.
struct AgentScript {
    core::Waypoint init;
    double half_x = 1.0;
    double half_y = 0.5;
    std::vector<double> speeds;  // length T+1

    friend bool operator==(const AgentScript&, const AgentScript&) = default;
};

struct DrivableGrid {
    double origin_x = 0.0;  // world position of the (0,0) cell corner
    double origin_y = 0.0;
    double cell_size = 0.5;
    int width = 0;   // cells along x
    int height = 0;  // cells along y
    std::vector<std::uint8_t> cells;  // row-major by y: index = iy*width + ix

    // False outside the raster bounds.
    bool drivable_at(double x, double y) const;

    friend bool operator==(const DrivableGrid&, const DrivableGrid&) = default;
};

struct RouteProjection {
    double s = 0.0;        // arclength of the closest centerline point
    double lateral = 0.0;  // signed lateral offset (+ = left of the tangent)
    double tangent_h = 0.0;
};

struct RoutePolyline {
    std::vector<double> xs;
    std::vector<double> ys;
    std::vector<double> s;  // cumulative arclength, strictly increasing

    static RoutePolyline from_points(const std::vector<std::pair<double, double>>& pts);

    double length() const { return s.empty() ? 0.0 : s.back(); }
    RouteProjection project(double x, double y) const;
    core::Waypoint point_at(double arclength) const;  // h = tangent heading
    // Unit normal (left of tangent) at the given arclength.
    void frame_at(double arclength, double& px, double& py, double& tx, double& ty) const;

    friend bool operator==(const RoutePolyline&, const RoutePolyline&) = default;
};

struct TrafficLight {
    double stop_line_s = 0.0;
    int red_start = 0;  // inclusive step interval of the red phase
    int red_end = 0;

    bool red_at(int step) const { return step >= red_start && step <= red_end; }

    friend bool operator==(const TrafficLight&, const TrafficLight&) = default;
};

enum class Family : int {
    kStraightFollow = 0,
    kLeadBrake = 1,
    kLaneChange = 2,
    kTurn = 3,
    kRedLight = 4,
};
inline constexpr int kNumFamilies = 5;
const char* family_name(Family f);
Family family_from_name(const std::string& name);

enum class Corruption : int {
    kNone = 0,
    kOffroadDrift = 1,
    kRedLightRun = 2,
    kSlowProgress = 3,
};
const char* corruption_name(Corruption c);
Corruption corruption_from_name(const std::string& name);

struct Scenario {
    std::string id;
    Family family = Family::kStraightFollow;
    Corruption corruption = Corruption::kNone;
    core::Waypoint ego_init;
    double ego_speed = 0.0;
    double ego_half_x = 1.0;
    double ego_half_y = 0.5;
    std::vector<AgentScript> agents;
    DrivableGrid grid;
    RoutePolyline route;
    std::optional<TrafficLight> light;
    core::Trajectory expert;  // the stored human demonstration (may be corrupted)
    core::DrivingCommand command = core::DrivingCommand::kStraight;

    int horizon() const { return expert.horizon(); }
    double dt() const { return expert.dt; }
};

// Throws ContractViolation when a scenario invariant is broken.
void validate_scenario(const Scenario& scenario);

// schema_version "scenario_v1"; deterministic field order and formatting.
std::string scenario_to_json(const Scenario& scenario);
Scenario scenario_from_json(const std::string& text);

void save_scenario(const std::string& path, const Scenario& scenario);
Scenario load_scenario(const std::string& path);

}  // namespace pairplan::sim
