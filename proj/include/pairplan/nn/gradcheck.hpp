#pragma once

#include <cstdint>
#include <functional>
#include <vector>

namespace pairplan::nn {

struct GradCheckReport {
    double max_rel_err = 0.0;
    bool pass = false;
    int coords_checked = 0;
};

// Central-difference verification of an analytic gradient. Checks every
// coordinate when max_coords <= 0, otherwise a seeded random subset.
GradCheckReport finite_diff_check(
    const std::vector<double>& params,
    const std::function<double(const std::vector<double>&)>& loss,
    const std::vector<double>& analytic_grad, double tolerance, double h = 1e-5,
    int max_coords = 0, std::uint64_t seed = 1);

}  // namespace pairplan::nn
