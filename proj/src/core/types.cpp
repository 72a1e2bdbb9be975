#include "pairplan/core/types.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "pairplan/util/errors.hpp"

namespace pairplan::core {

namespace {
constexpr double kPi = 3.141592653589793238462643383279502884;
constexpr double kTwoPi = 2.0 * kPi;
}  // namespace

double normalize_angle(double h) {
    double r = std::fmod(h + kPi, kTwoPi);
    if (r <= 0.0) r += kTwoPi;
    return r - kPi;
}

const char* intention_name(Intention i) {
    switch (i) {
        case Intention::kKeep: return "keep";
        case Intention::kLeft: return "left";
        case Intention::kRight: return "right";
        case Intention::kAccelerate: return "accelerate";
        case Intention::kDecelerate: return "decelerate";
    }
    return "unknown";
}

const char* command_name(DrivingCommand c) {
    switch (c) {
        case DrivingCommand::kStraight: return "straight";
        case DrivingCommand::kTurnLeft: return "turn_left";
        case DrivingCommand::kTurnRight: return "turn_right";
    }
    return "unknown";
}

DrivingCommand command_from_name(const std::string& name) {
    if (name == "straight") return DrivingCommand::kStraight;
    if (name == "turn_left") return DrivingCommand::kTurnLeft;
    if (name == "turn_right") return DrivingCommand::kTurnRight;
    throw ConfigError("unknown driving command: " + name);
}

void validate_trajectory(const Trajectory& traj, double v_max) {
    if (traj.points.empty()) throw ContractViolation("trajectory has no points");
    if (!(traj.dt > 0.0)) throw ContractViolation("trajectory dt must be > 0");
    for (const auto& p : traj.points) {
        if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.h))
            throw ContractViolation("trajectory contains non-finite waypoint");
    }
    const double step_cap = v_max * traj.dt + 1e-9;
    for (std::size_t t = 1; t < traj.points.size(); ++t) {
        const double dx = traj.points[t].x - traj.points[t - 1].x;
        const double dy = traj.points[t].y - traj.points[t - 1].y;
        if (std::hypot(dx, dy) > step_cap)
            throw ContractViolation("trajectory step exceeds kinematic bound v_max*dt");
    }
}

Trajectory apply_offsets(const Waypoint& root, const std::vector<OffsetStep>& offsets,
                         double dt) {
    Trajectory traj;
    traj.dt = dt;
    traj.points.reserve(offsets.size() + 1);
    Waypoint w = root;
    w.h = normalize_angle(w.h);
    traj.points.push_back(w);
    for (const auto& o : offsets) {
        w.x += o.dx;
        w.y += o.dy;
        w.h = normalize_angle(w.h + o.dh);
        traj.points.push_back(w);
    }
    return traj;
}

Waypoint to_ego_frame(const Waypoint& point, const Waypoint& pose) {
    const double c = std::cos(pose.h);
    const double s = std::sin(pose.h);
    const double dx = point.x - pose.x;
    const double dy = point.y - pose.y;
    return Waypoint{c * dx + s * dy, -s * dx + c * dy, normalize_angle(point.h - pose.h)};
}

Waypoint from_ego_frame(const Waypoint& point, const Waypoint& pose) {
    const double c = std::cos(pose.h);
    const double s = std::sin(pose.h);
    return Waypoint{pose.x + c * point.x - s * point.y,
                    pose.y + s * point.x + c * point.y,
                    normalize_angle(point.h + pose.h)};
}

Trajectory to_ego_frame(const Trajectory& traj, const Waypoint& pose) {
    Trajectory out;
    out.dt = traj.dt;
    out.points.reserve(traj.points.size());
    for (const auto& p : traj.points) out.points.push_back(to_ego_frame(p, pose));
    return out;
}

Trajectory from_ego_frame(const Trajectory& traj, const Waypoint& pose) {
    Trajectory out;
    out.dt = traj.dt;
    out.points.reserve(traj.points.size());
    for (const auto& p : traj.points) out.points.push_back(from_ego_frame(p, pose));
    return out;
}

std::vector<std::string> trajectory_rows(const Trajectory& traj) {
    std::vector<std::string> rows;
    rows.reserve(traj.points.size());
    char buf[128];
    for (std::size_t t = 0; t < traj.points.size(); ++t) {
        const auto& p = traj.points[t];
        std::snprintf(buf, sizeof(buf), "%zu,%.6f,%.6f,%.6f", t, p.x, p.y, p.h);
        rows.emplace_back(buf);
    }
    return rows;
}

Trajectory trajectory_from_rows(const std::vector<std::string>& rows, double dt) {
    Trajectory traj;
    traj.dt = dt;
    traj.points.reserve(rows.size());
    for (const auto& row : rows) {
        unsigned long t = 0;
        Waypoint p;
        if (std::sscanf(row.c_str(), "%lu,%lf,%lf,%lf", &t, &p.x, &p.y, &p.h) != 4)
            throw FormatError("bad trajectory row: " + row);
        if (t != traj.points.size())
            throw FormatError("trajectory rows out of order at t=" + std::to_string(t));
        traj.points.push_back(p);
    }
    return traj;
}

TrajectoryTree::TrajectoryTree(const Waypoint& root) {
    TreeNode n;
    n.id = next_id_++;
    n.waypoint = root;
    nodes_.push_back(n);
}

int TrajectoryTree::index_of(int id) const {
    auto it = std::lower_bound(nodes_.begin(), nodes_.end(), id,
                               [](const TreeNode& n, int v) { return n.id < v; });
    if (it == nodes_.end() || it->id != id)
        throw ContractViolation("tree node not found: " + std::to_string(id));
    return static_cast<int>(it - nodes_.begin());
}

bool TrajectoryTree::contains(int id) const {
    auto it = std::lower_bound(nodes_.begin(), nodes_.end(), id,
                               [](const TreeNode& n, int v) { return n.id < v; });
    return it != nodes_.end() && it->id == id;
}

int TrajectoryTree::add_node(int parent_id, const Waypoint& waypoint, int intention,
                             double cum_log_prob) {
    const TreeNode& parent = nodes_[static_cast<std::size_t>(index_of(parent_id))];
    TreeNode n;
    n.id = next_id_++;
    n.waypoint = waypoint;
    n.parent = parent_id;
    n.intention = intention;
    n.depth = parent.depth + 1;
    n.cum_log_prob = cum_log_prob;
    nodes_.push_back(n);
    return n.id;
}

const TreeNode& TrajectoryTree::node(int id) const {
    return nodes_[static_cast<std::size_t>(index_of(id))];
}

std::vector<int> TrajectoryTree::leaf_ids() const {
    std::vector<bool> has_child(nodes_.size(), false);
    for (const auto& n : nodes_) {
        if (n.parent >= 0) has_child[static_cast<std::size_t>(index_of(n.parent))] = true;
    }
    std::vector<int> leaves;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        if (!has_child[i]) leaves.push_back(nodes_[i].id);
    }
    return leaves;
}

int TrajectoryTree::leaf_depth() const {
    const auto leaves = leaf_ids();
    int depth = -1;
    for (int id : leaves) {
        const int d = node(id).depth;
        if (depth < 0) depth = d;
        else if (d != depth) throw ContractViolation("ragged leaf depths in trajectory tree");
    }
    return depth;
}

std::vector<int> TrajectoryTree::node_path_to(int id) const {
    std::vector<int> rev;
    int cur = id;
    while (cur >= 0) {
        rev.push_back(cur);
        cur = node(cur).parent;
    }
    return {rev.rbegin(), rev.rend()};
}

std::vector<Waypoint> TrajectoryTree::path_to(int id) const {
    std::vector<Waypoint> points;
    for (int nid : node_path_to(id)) points.push_back(node(nid).waypoint);
    return points;
}

void TrajectoryTree::prune_leaves(const std::vector<std::pair<int, double>>& values,
                                  int keep_k) {
    if (keep_k < 1) throw ContractViolation("prune keep_k must be >= 1");
    auto ranked = values;
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    if (static_cast<int>(ranked.size()) > keep_k)
        ranked.resize(static_cast<std::size_t>(keep_k));

    std::vector<bool> keep(nodes_.size(), false);
    for (const auto& [leaf_id, value] : ranked) {
        (void)value;
        int cur = leaf_id;
        while (cur >= 0) {
            const int idx = index_of(cur);
            if (keep[static_cast<std::size_t>(idx)]) break;
            keep[static_cast<std::size_t>(idx)] = true;
            cur = nodes_[static_cast<std::size_t>(idx)].parent;
        }
    }

    std::vector<TreeNode> survivors;
    survivors.reserve(nodes_.size());
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        if (keep[i]) survivors.push_back(nodes_[i]);
    }
    nodes_ = std::move(survivors);
}

void TrajectoryTree::validate() const {
    if (nodes_.empty() || nodes_.front().parent != -1)
        throw ContractViolation("tree must have exactly one root");
    int roots = 0;
    for (const auto& n : nodes_) {
        if (n.parent < 0) {
            ++roots;
            continue;
        }
        const TreeNode& parent = node(n.parent);
        if (n.depth != parent.depth + 1)
            throw ContractViolation("tree node depth must be parent depth + 1");
    }
    if (roots != 1) throw ContractViolation("tree must have exactly one root");
    (void)leaf_depth();
}

}  // namespace pairplan::core
