#include "pairplan/nn/adamw.hpp"

#include <cmath>
#include <cstdio>

#include "pairplan/util/errors.hpp"

namespace pairplan::nn {

AdamWState AdamWState::create(const AdamWConfig& config, std::size_t param_count) {
    AdamWState state;
    state.config = config;
    state.m.assign(param_count, 0.0);
    state.v.assign(param_count, 0.0);
    return state;
}

double scheduled_lr(const AdamWState& state) {
    const AdamWConfig& c = state.config;
    if (c.schedule == LrSchedule::kConstant || c.total_steps <= 0) return c.lr;
    const double frac =
        std::min(1.0, static_cast<double>(state.step) / static_cast<double>(c.total_steps));
    constexpr double kPi = 3.141592653589793238462643383279502884;
    return c.lr_final + 0.5 * (c.lr - c.lr_final) * (1.0 + std::cos(kPi * frac));
}

bool adamw_step(ParameterSet& params, const GradientSet& grads, AdamWState& state) {
    if (grads.size() != params.values.size() || state.m.size() != params.values.size())
        throw ShapeError("adamw: gradient/state length mismatch");

    for (double g : grads) {
        if (!std::isfinite(g)) {
            ++state.skipped;
            std::fprintf(stderr,
                         "pairplan: adamw update %lld skipped (non-finite gradient)\n",
                         static_cast<long long>(state.step));
            return false;
        }
    }

    const AdamWConfig& c = state.config;
    const double lr = scheduled_lr(state);
    state.step += 1;
    const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.values.size(); ++i) {
        state.m[i] = c.beta1 * state.m[i] + (1.0 - c.beta1) * grads[i];
        state.v[i] = c.beta2 * state.v[i] + (1.0 - c.beta2) * grads[i] * grads[i];
        const double mhat = state.m[i] / bc1;
        const double vhat = state.v[i] / bc2;
        params.values[i] -= lr * c.weight_decay * params.values[i];
        params.values[i] -= lr * mhat / (std::sqrt(vhat) + c.eps);
    }
    return true;
}

}  // namespace pairplan::nn
