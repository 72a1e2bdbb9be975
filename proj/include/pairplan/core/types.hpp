#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace pairplan::core {

// Wraps an angle into (-pi, pi]. Idempotent.
double normalize_angle(double h);

struct Waypoint {
    double x = 0.0;  // longitudinal position, meters (ego frame at t=0)
    double y = 0.0;  // lateral position, meters
    double h = 0.0;  // heading, radians, normalized to (-pi, pi]

    friend bool operator==(const Waypoint&, const Waypoint&) = default;
};

// Per-step displacement deltas added to the previous waypoint.
struct OffsetStep {
    double dx = 0.0;
    double dy = 0.0;
    double dh = 0.0;

    friend bool operator==(const OffsetStep&, const OffsetStep&) = default;
};

struct Trajectory {
    std::vector<Waypoint> points;  // exactly T+1 entries
    double dt = 0.5;               // seconds per step

    int horizon() const { return static_cast<int>(points.size()) - 1; }

    friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

// Throws ContractViolation when the trajectory breaks its invariants
// (length < 1, dt <= 0, non-finite fields, consecutive spacing > v_max*dt).
void validate_trajectory(const Trajectory& traj, double v_max);

enum class Intention : int {
    kKeep = 0,
    kLeft = 1,
    kRight = 2,
    kAccelerate = 3,
    kDecelerate = 4,
};
inline constexpr int kNumIntentions = 5;
const char* intention_name(Intention i);

enum class DrivingCommand : int {
    kStraight = 0,
    kTurnLeft = 1,
    kTurnRight = 2,
};
inline constexpr int kNumCommands = 3;
const char* command_name(DrivingCommand c);
DrivingCommand command_from_name(const std::string& name);

// w_t = w_{t-1} + offsets[t-1], componentwise, heading re-normalized after
// every addition. offsets.size() defines the horizon T.
Trajectory apply_offsets(const Waypoint& root, const std::vector<OffsetStep>& offsets,
                         double dt);

// Rigid 2D transform mapping `pose` to the origin with zero heading.
Trajectory to_ego_frame(const Trajectory& traj, const Waypoint& pose);
Waypoint to_ego_frame(const Waypoint& point, const Waypoint& pose);

// Exact inverse of to_ego_frame.
Trajectory from_ego_frame(const Trajectory& traj, const Waypoint& pose);
Waypoint from_ego_frame(const Waypoint& point, const Waypoint& pose);

// Row serialization used inside scenario/report files: "t,x,y,h" with
// fixed-point 6 decimals per coordinate.
std::vector<std::string> trajectory_rows(const Trajectory& traj);
Trajectory trajectory_from_rows(const std::vector<std::string>& rows, double dt);

// Intention-labeled branching structure over waypoints. Node ids are
// creation-ordered and survive pruning; depth is the timestep index.
struct TreeNode {
    int id = 0;
    Waypoint waypoint;
    int parent = -1;         // -1 for the root
    int intention = -1;      // -1 for the root
    int depth = 0;
    double cum_log_prob = 0.0;
};

class TrajectoryTree {
public:
    explicit TrajectoryTree(const Waypoint& root);

    // Appends a child of `parent_id`, depth = parent depth + 1.
    int add_node(int parent_id, const Waypoint& waypoint, int intention,
                 double cum_log_prob);

    const TreeNode& node(int id) const;
    bool contains(int id) const;
    std::size_t node_count() const { return nodes_.size(); }

    // Ids of nodes without children, ascending.
    std::vector<int> leaf_ids() const;

    // Common leaf depth; throws ContractViolation when leaf depths are ragged.
    int leaf_depth() const;

    // Waypoint path from the root to `id`, inclusive.
    std::vector<Waypoint> path_to(int id) const;
    std::vector<int> node_path_to(int id) const;

    // Keeps the `keep_k` leaves with the highest values (ties broken by lower
    // leaf id) and drops every node with no surviving leaf below it.
    // `values` is keyed by leaf id.
    void prune_leaves(const std::vector<std::pair<int, double>>& values, int keep_k);

    // Enforces structural invariants; throws ContractViolation on violation.
    void validate() const;

private:
    std::vector<TreeNode> nodes_;  // sorted by id
    int next_id_ = 0;

    int index_of(int id) const;
};

}  // namespace pairplan::core
