#include "pairplan/nn/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "pairplan/util/errors.hpp"
#include "pairplan/util/rng.hpp"

namespace pairplan::nn {

GradCheckReport finite_diff_check(
    const std::vector<double>& params,
    const std::function<double(const std::vector<double>&)>& loss,
    const std::vector<double>& analytic_grad, double tolerance, double h,
    int max_coords, std::uint64_t seed) {
    if (params.size() != analytic_grad.size())
        throw ShapeError("finite_diff_check: gradient length mismatch");

    std::vector<std::size_t> coords(params.size());
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
    if (max_coords > 0 && static_cast<std::size_t>(max_coords) < coords.size()) {
        util::Rng rng(seed);
        for (std::size_t i = 0; i < coords.size(); ++i) {
            const std::size_t j = i + rng.next_u64() % (coords.size() - i);
            std::swap(coords[i], coords[j]);
        }
        coords.resize(static_cast<std::size_t>(max_coords));
    }

    GradCheckReport report;
    std::vector<double> probe = params;
    for (std::size_t idx : coords) {
        const double orig = probe[idx];
        probe[idx] = orig + h;
        const double up = loss(probe);
        probe[idx] = orig - h;
        const double down = loss(probe);
        probe[idx] = orig;
        const double fd = (up - down) / (2.0 * h);
        const double an = analytic_grad[idx];
        const double denom = std::max({std::abs(fd), std::abs(an), 1e-6});
        report.max_rel_err = std::max(report.max_rel_err, std::abs(fd - an) / denom);
        ++report.coords_checked;
    }
    report.pass = report.max_rel_err < tolerance;
    return report;
}

}  // namespace pairplan::nn
