#include "pairplan/sim/scenario.hpp"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "pairplan/util/errors.hpp"

namespace pairplan::sim {

using ordered_json = nlohmann::ordered_json;

bool DrivableGrid::drivable_at(double x, double y) const {
    const int ix = static_cast<int>(std::floor((x - origin_x) / cell_size));
    const int iy = static_cast<int>(std::floor((y - origin_y) / cell_size));
    if (ix < 0 || iy < 0 || ix >= width || iy >= height) return false;
    return cells[static_cast<std::size_t>(iy) * static_cast<std::size_t>(width) +
                 static_cast<std::size_t>(ix)] != 0;
}

RoutePolyline RoutePolyline::from_points(
    const std::vector<std::pair<double, double>>& pts) {
    if (pts.size() < 2) throw ContractViolation("route needs at least two points");
    RoutePolyline route;
    route.xs.reserve(pts.size());
    route.ys.reserve(pts.size());
    route.s.reserve(pts.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        if (i > 0) {
            const double d = std::hypot(pts[i].first - pts[i - 1].first,
                                        pts[i].second - pts[i - 1].second);
            if (d <= 1e-9)
                throw ContractViolation("route arclength must be strictly increasing");
            acc += d;
        }
        route.xs.push_back(pts[i].first);
        route.ys.push_back(pts[i].second);
        route.s.push_back(acc);
    }
    return route;
}

RouteProjection RoutePolyline::project(double x, double y) const {
    RouteProjection best;
    double best_d2 = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
        const double ax = xs[i], ay = ys[i];
        const double bx = xs[i + 1], by = ys[i + 1];
        const double vx = bx - ax, vy = by - ay;
        const double seg_len2 = vx * vx + vy * vy;
        double t = ((x - ax) * vx + (y - ay) * vy) / seg_len2;
        t = std::clamp(t, 0.0, 1.0);
        const double px = ax + t * vx, py = ay + t * vy;
        const double d2 = (x - px) * (x - px) + (y - py) * (y - py);
        if (d2 < best_d2) {
            best_d2 = d2;
            const double seg_len = std::sqrt(seg_len2);
            const double tangent_h = std::atan2(vy, vx);
            // cross(v, p - proj) > 0 means left of the tangent
            const double cross = vx * (y - py) - vy * (x - px);
            best.s = s[i] + t * seg_len;
            best.lateral = (cross >= 0.0 ? 1.0 : -1.0) * std::sqrt(d2);
            best.tangent_h = tangent_h;
        }
    }
    return best;
}

void RoutePolyline::frame_at(double arclength, double& px, double& py, double& tx,
                             double& ty) const {
    const double sa = std::clamp(arclength, 0.0, length());
    std::size_t i = 0;
    while (i + 2 < s.size() && s[i + 1] < sa) ++i;
    const double seg = s[i + 1] - s[i];
    const double t = seg > 0.0 ? (sa - s[i]) / seg : 0.0;
    px = xs[i] + t * (xs[i + 1] - xs[i]);
    py = ys[i] + t * (ys[i + 1] - ys[i]);
    const double norm = std::hypot(xs[i + 1] - xs[i], ys[i + 1] - ys[i]);
    tx = (xs[i + 1] - xs[i]) / norm;
    ty = (ys[i + 1] - ys[i]) / norm;
}

core::Waypoint RoutePolyline::point_at(double arclength) const {
    double px, py, tx, ty;
    frame_at(arclength, px, py, tx, ty);
    return core::Waypoint{px, py, std::atan2(ty, tx)};
}

const char* family_name(Family f) {
    switch (f) {
        case Family::kStraightFollow: return "straight_follow";
        case Family::kLeadBrake: return "lead_brake";
        case Family::kLaneChange: return "lane_change";
        case Family::kTurn: return "turn";
        case Family::kRedLight: return "red_light";
    }
    return "unknown";
}

Family family_from_name(const std::string& name) {
    if (name == "straight_follow") return Family::kStraightFollow;
    if (name == "lead_brake") return Family::kLeadBrake;
    if (name == "lane_change") return Family::kLaneChange;
    if (name == "turn") return Family::kTurn;
    if (name == "red_light") return Family::kRedLight;
    throw ConfigError("unknown scenario family: " + name);
}

const char* corruption_name(Corruption c) {
    switch (c) {
        case Corruption::kNone: return "none";
        case Corruption::kOffroadDrift: return "offroad_drift";
        case Corruption::kRedLightRun: return "red_light_run";
        case Corruption::kSlowProgress: return "slow_progress";
    }
    return "unknown";
}

Corruption corruption_from_name(const std::string& name) {
    if (name == "none") return Corruption::kNone;
    if (name == "offroad_drift") return Corruption::kOffroadDrift;
    if (name == "red_light_run") return Corruption::kRedLightRun;
    if (name == "slow_progress") return Corruption::kSlowProgress;
    throw ConfigError("unknown corruption mode: " + name);
}

void validate_scenario(const Scenario& scenario) {
    if (scenario.id.empty()) throw ContractViolation("scenario id is empty");
    if (!scenario.grid.drivable_at(scenario.ego_init.x, scenario.ego_init.y))
        throw ContractViolation("ego_init must lie inside the drivable region");
    if (scenario.expert.points.empty())
        throw ContractViolation("scenario expert trajectory is empty");
    if (!(scenario.expert.dt > 0.0)) throw ContractViolation("expert dt must be > 0");
    for (std::size_t i = 1; i < scenario.route.s.size(); ++i) {
        if (!(scenario.route.s[i] > scenario.route.s[i - 1]))
            throw ContractViolation("route arclength must be strictly increasing");
    }
    const std::size_t want = scenario.expert.points.size();
    for (const auto& agent : scenario.agents) {
        if (agent.speeds.size() != want)
            throw ContractViolation("agent speed profile length must equal T+1");
        if (!(agent.half_x > 0.0) || !(agent.half_y > 0.0))
            throw ContractViolation("agent footprint half-extents must be positive");
    }
}

std::string scenario_to_json(const Scenario& scenario) {
    ordered_json j;
    j["schema_version"] = "scenario_v1";
    j["id"] = scenario.id;
    j["family"] = family_name(scenario.family);
    j["corruption"] = corruption_name(scenario.corruption);
    j["horizon_steps"] = scenario.horizon();
    j["dt"] = scenario.dt();
    j["command"] = core::command_name(scenario.command);

    ordered_json ego;
    ego["x"] = scenario.ego_init.x;
    ego["y"] = scenario.ego_init.y;
    ego["h"] = scenario.ego_init.h;
    ego["speed"] = scenario.ego_speed;
    ego["half_x"] = scenario.ego_half_x;
    ego["half_y"] = scenario.ego_half_y;
    j["ego"] = ego;

    ordered_json agents = ordered_json::array();
    for (const auto& a : scenario.agents) {
        ordered_json ja;
        ja["x"] = a.init.x;
        ja["y"] = a.init.y;
        ja["h"] = a.init.h;
        ja["half_x"] = a.half_x;
        ja["half_y"] = a.half_y;
        ja["speeds"] = a.speeds;
        agents.push_back(ja);
    }
    j["agents"] = agents;

    ordered_json grid;
    grid["origin_x"] = scenario.grid.origin_x;
    grid["origin_y"] = scenario.grid.origin_y;
    grid["cell_size"] = scenario.grid.cell_size;
    grid["width"] = scenario.grid.width;
    grid["height"] = scenario.grid.height;
    ordered_json rows = ordered_json::array();
    for (int iy = 0; iy < scenario.grid.height; ++iy) {
        std::string row(static_cast<std::size_t>(scenario.grid.width), '0');
        for (int ix = 0; ix < scenario.grid.width; ++ix) {
            if (scenario.grid.cells[static_cast<std::size_t>(iy) *
                                        static_cast<std::size_t>(scenario.grid.width) +
                                    static_cast<std::size_t>(ix)])
                row[static_cast<std::size_t>(ix)] = '1';
        }
        rows.push_back(row);
    }
    grid["rows"] = rows;
    j["grid"] = grid;

    ordered_json route = ordered_json::array();
    for (std::size_t i = 0; i < scenario.route.xs.size(); ++i)
        route.push_back({scenario.route.xs[i], scenario.route.ys[i]});
    j["route"] = route;

    if (scenario.light.has_value()) {
        ordered_json light;
        light["stop_line_s"] = scenario.light->stop_line_s;
        light["red_start"] = scenario.light->red_start;
        light["red_end"] = scenario.light->red_end;
        j["traffic_light"] = light;
    } else {
        j["traffic_light"] = nullptr;
    }

    j["expert"] = core::trajectory_rows(scenario.expert);
    return j.dump(2) + "\n";
}

Scenario scenario_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(std::string("scenario file is not valid JSON: ") + e.what());
    }
    const std::string version = j.at("schema_version");
    if (version != "scenario_v1")
        throw FormatError("scenario schema mismatch: expected 'scenario_v1', found '" +
                          version + "'");

    Scenario scenario;
    scenario.id = j.at("id");
    scenario.family = family_from_name(j.at("family"));
    scenario.corruption = corruption_from_name(j.at("corruption"));
    scenario.command = core::command_from_name(j.at("command"));
    const double dt = j.at("dt");

    const auto& ego = j.at("ego");
    scenario.ego_init = core::Waypoint{ego.at("x"), ego.at("y"), ego.at("h")};
    scenario.ego_speed = ego.at("speed");
    scenario.ego_half_x = ego.at("half_x");
    scenario.ego_half_y = ego.at("half_y");

    for (const auto& ja : j.at("agents")) {
        AgentScript a;
        a.init = core::Waypoint{ja.at("x"), ja.at("y"), ja.at("h")};
        a.half_x = ja.at("half_x");
        a.half_y = ja.at("half_y");
        a.speeds = ja.at("speeds").get<std::vector<double>>();
        scenario.agents.push_back(std::move(a));
    }

    const auto& grid = j.at("grid");
    scenario.grid.origin_x = grid.at("origin_x");
    scenario.grid.origin_y = grid.at("origin_y");
    scenario.grid.cell_size = grid.at("cell_size");
    scenario.grid.width = grid.at("width");
    scenario.grid.height = grid.at("height");
    const auto& rows = grid.at("rows");
    scenario.grid.cells.assign(
        static_cast<std::size_t>(scenario.grid.width) *
            static_cast<std::size_t>(scenario.grid.height),
        0);
    for (int iy = 0; iy < scenario.grid.height; ++iy) {
        const std::string row = rows.at(static_cast<std::size_t>(iy));
        for (int ix = 0; ix < scenario.grid.width; ++ix) {
            if (row.at(static_cast<std::size_t>(ix)) == '1')
                scenario.grid.cells[static_cast<std::size_t>(iy) *
                                        static_cast<std::size_t>(scenario.grid.width) +
                                    static_cast<std::size_t>(ix)] = 1;
        }
    }

    std::vector<std::pair<double, double>> pts;
    for (const auto& p : j.at("route")) pts.emplace_back(p.at(0), p.at(1));
    scenario.route = RoutePolyline::from_points(pts);

    if (!j.at("traffic_light").is_null()) {
        const auto& light = j.at("traffic_light");
        scenario.light = TrafficLight{light.at("stop_line_s"), light.at("red_start"),
                                      light.at("red_end")};
    }

    scenario.expert = core::trajectory_from_rows(
        j.at("expert").get<std::vector<std::string>>(), dt);
    validate_scenario(scenario);
    return scenario;
}

void save_scenario(const std::string& path, const Scenario& scenario) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open scenario for writing: " + path);
    out << scenario_to_json(scenario);
    if (!out) throw IoError("scenario write failed: " + path);
}

Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open scenario: " + path);
    std::string text((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
    return scenario_from_json(text);
}

}  // namespace pairplan::sim
