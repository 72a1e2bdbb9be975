#include <doctest.h>

#include <cmath>

#include "pairplan/core/types.hpp"
#include "pairplan/util/errors.hpp"
#include "pairplan/util/rng.hpp"

using namespace pairplan;
using core::OffsetStep;
using core::Trajectory;
using core::Waypoint;

namespace {
constexpr double kPi = 3.141592653589793238462643383279502884;
}

TEST_CASE("normalize_angle lands in (-pi, pi] and is idempotent") {
    util::Rng rng(7);
    for (int i = 0; i < 2000; ++i) {
        const double h = rng.uniform(-50.0, 50.0);
        const double n = core::normalize_angle(h);
        CHECK(n > -kPi);
        CHECK(n <= kPi);
        CHECK(core::normalize_angle(n) == doctest::Approx(n).epsilon(1e-15));
        // same angle modulo 2*pi
        CHECK(std::remainder(n - h, 2.0 * kPi) == doctest::Approx(0.0).epsilon(1e-9));
    }
    CHECK(core::normalize_angle(kPi) == doctest::Approx(kPi));
    CHECK(core::normalize_angle(-kPi) == doctest::Approx(kPi));
    CHECK(core::normalize_angle(0.0) == 0.0);
}

TEST_CASE("apply_offsets zero offsets is the stationary trajectory") {
    const std::vector<OffsetStep> offsets(8, OffsetStep{0, 0, 0});
    const Trajectory traj = core::apply_offsets(Waypoint{0, 0, 0}, offsets, 0.5);
    REQUIRE(traj.points.size() == 9);
    for (const auto& p : traj.points) {
        CHECK(p.x == 0.0);
        CHECK(p.y == 0.0);
        CHECK(p.h == 0.0);
    }
}

TEST_CASE("apply_offsets telescopes unit steps") {
    const std::vector<OffsetStep> offsets(8, OffsetStep{1, 0, 0});
    const Trajectory traj = core::apply_offsets(Waypoint{0, 0, 0}, offsets, 0.5);
    for (int t = 0; t <= 8; ++t)
        CHECK(traj.points[static_cast<std::size_t>(t)].x == doctest::Approx(t));
}

TEST_CASE("apply_offsets matches the cumulative-sum oracle") {
    const std::vector<OffsetStep> offsets = {{0.5, 0.1, 0.05}, {1.0, -0.1, 0.0}};
    const Trajectory traj = core::apply_offsets(Waypoint{1, 2, 0.1}, offsets, 0.5);
    REQUIRE(traj.points.size() == 3);
    CHECK(traj.points[0].x == doctest::Approx(1.0));
    CHECK(traj.points[0].y == doctest::Approx(2.0));
    CHECK(traj.points[0].h == doctest::Approx(0.1));
    CHECK(traj.points[1].x == doctest::Approx(1.5));
    CHECK(traj.points[1].y == doctest::Approx(2.1));
    CHECK(traj.points[1].h == doctest::Approx(0.15));
    CHECK(traj.points[2].x == doctest::Approx(2.5));
    CHECK(traj.points[2].y == doctest::Approx(2.0));
    CHECK(traj.points[2].h == doctest::Approx(0.15));
}

TEST_CASE("apply_offsets endpoint equals componentwise offset sum (property)") {
    util::Rng rng(19);
    for (int rep = 0; rep < 200; ++rep) {
        const int T = rng.uniform_int(1, 12);
        std::vector<OffsetStep> offsets;
        double sx = 0.0, sy = 0.0, sh = 0.0;
        for (int t = 0; t < T; ++t) {
            OffsetStep o{rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-1, 1)};
            offsets.push_back(o);
            sx += o.dx;
            sy += o.dy;
            sh += o.dh;
        }
        const Waypoint root{rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-3, 3)};
        const Trajectory traj = core::apply_offsets(root, offsets, 0.5);
        const Waypoint& last = traj.points.back();
        CHECK(last.x - traj.points.front().x == doctest::Approx(sx).epsilon(1e-12));
        CHECK(last.y - traj.points.front().y == doctest::Approx(sy).epsilon(1e-12));
        const double want = core::normalize_angle(traj.points.front().h + sh);
        CHECK(std::remainder(last.h - want, 2.0 * kPi) ==
              doctest::Approx(0.0).epsilon(1e-9));
    }
}

TEST_CASE("to_ego_frame identity pose and inverse round trip") {
    std::vector<OffsetStep> offsets = {{1, 0.5, 0.2}, {0.8, -0.5, -0.4}};
    const Trajectory traj = core::apply_offsets(Waypoint{2, -1, 0.3}, offsets, 0.5);

    const Trajectory same = core::to_ego_frame(traj, Waypoint{0, 0, 0});
    for (std::size_t i = 0; i < traj.points.size(); ++i) {
        CHECK(same.points[i].x == doctest::Approx(traj.points[i].x).epsilon(1e-15));
        CHECK(same.points[i].y == doctest::Approx(traj.points[i].y).epsilon(1e-15));
    }

    util::Rng rng(3);
    for (int rep = 0; rep < 100; ++rep) {
        const Waypoint pose{rng.uniform(-10, 10), rng.uniform(-10, 10),
                            rng.uniform(-3, 3)};
        const Trajectory there = core::to_ego_frame(traj, pose);
        const Trajectory back = core::from_ego_frame(there, pose);
        for (std::size_t i = 0; i < traj.points.size(); ++i) {
            CHECK(back.points[i].x == doctest::Approx(traj.points[i].x).epsilon(1e-12));
            CHECK(back.points[i].y == doctest::Approx(traj.points[i].y).epsilon(1e-12));
            CHECK(std::remainder(back.points[i].h - traj.points[i].h, 2.0 * kPi) ==
                  doctest::Approx(0.0).epsilon(1e-12));
        }
    }
}

TEST_CASE("to_ego_frame hand-computed rotation") {
    const Waypoint p = core::to_ego_frame(Waypoint{1, 0, 0}, Waypoint{0, 0, kPi / 2});
    CHECK(p.x == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(p.y == doctest::Approx(-1.0));
    CHECK(p.h == doctest::Approx(-kPi / 2));
}

TEST_CASE("trajectory rows round trip at 6 decimals") {
    std::vector<OffsetStep> offsets = {{1.2345678, -0.111, 0.5}, {2.0, 0.25, -0.75}};
    const Trajectory traj = core::apply_offsets(Waypoint{0.1, 0.2, 0.3}, offsets, 0.5);
    const auto rows = core::trajectory_rows(traj);
    REQUIRE(rows.size() == 3);
    CHECK(rows[0] == "0,0.100000,0.200000,0.300000");
    const Trajectory parsed = core::trajectory_from_rows(rows, 0.5);
    for (std::size_t i = 0; i < traj.points.size(); ++i) {
        CHECK(parsed.points[i].x == doctest::Approx(traj.points[i].x).epsilon(1e-6));
        CHECK(parsed.points[i].h == doctest::Approx(traj.points[i].h).epsilon(1e-6));
    }
    CHECK_THROWS_AS(core::trajectory_from_rows({"nonsense"}, 0.5), FormatError);
}

TEST_CASE("validate_trajectory flags kinematic violations") {
    Trajectory traj =
        core::apply_offsets(Waypoint{0, 0, 0}, {{1, 0, 0}, {20, 0, 0}}, 0.5);
    CHECK_THROWS_AS(core::validate_trajectory(traj, 15.0), ContractViolation);
    const Trajectory ok = core::apply_offsets(Waypoint{0, 0, 0}, {{1, 0, 0}}, 0.5);
    CHECK_NOTHROW(core::validate_trajectory(ok, 15.0));
}

TEST_CASE("tree leaf count after k unpruned expansions is N^k") {
    const int N = 5;
    core::TrajectoryTree tree(Waypoint{0, 0, 0});
    for (int stage = 0; stage < 3; ++stage) {
        for (int leaf : tree.leaf_ids()) {
            for (int n = 0; n < N; ++n)
                tree.add_node(leaf, Waypoint{static_cast<double>(n), 0, 0}, n, 0.0);
        }
    }
    CHECK(tree.leaf_ids().size() == 125);
    CHECK_NOTHROW(tree.validate());
}

TEST_CASE("tree prune keeps top-k by value with id tie-break") {
    core::TrajectoryTree tree(Waypoint{0, 0, 0});
    std::vector<int> leaves;
    for (int n = 0; n < 3; ++n)
        leaves.push_back(tree.add_node(0, Waypoint{0, 0, 0}, n, 0.0));

    SUBCASE("keep_k >= leaf count leaves the tree unchanged") {
        tree.prune_leaves({{leaves[0], 3.0}, {leaves[1], 1.0}, {leaves[2], 2.0}}, 10);
        CHECK(tree.leaf_ids().size() == 3);
    }
    SUBCASE("values 3,1,2 with keep_k=2 keeps values 3 and 2") {
        tree.prune_leaves({{leaves[0], 3.0}, {leaves[1], 1.0}, {leaves[2], 2.0}}, 2);
        const auto kept = tree.leaf_ids();
        REQUIRE(kept.size() == 2);
        CHECK(kept[0] == leaves[0]);
        CHECK(kept[1] == leaves[2]);
    }
    SUBCASE("equal values keep the lowest ids, deterministically") {
        for (int rep = 0; rep < 3; ++rep) {
            core::TrajectoryTree t2(Waypoint{0, 0, 0});
            std::vector<int> l2;
            for (int n = 0; n < 4; ++n)
                l2.push_back(t2.add_node(0, Waypoint{0, 0, 0}, n, 0.0));
            t2.prune_leaves({{l2[0], 1.0}, {l2[1], 1.0}, {l2[2], 1.0}, {l2[3], 1.0}}, 2);
            const auto kept = t2.leaf_ids();
            REQUIRE(kept.size() == 2);
            CHECK(kept[0] == l2[0]);
            CHECK(kept[1] == l2[1]);
        }
    }
}

TEST_CASE("tree detects ragged leaf depths") {
    core::TrajectoryTree tree(Waypoint{0, 0, 0});
    const int a = tree.add_node(0, Waypoint{1, 0, 0}, 0, 0.0);
    tree.add_node(0, Waypoint{2, 0, 0}, 1, 0.0);
    tree.add_node(a, Waypoint{3, 0, 0}, 0, 0.0);
    CHECK_THROWS_AS(tree.leaf_depth(), ContractViolation);
}
