#pragma once

#include <cstdint>
#include <vector>

#include "pairplan/nn/nn.hpp"

namespace pairplan::nn {

enum class LrSchedule : int { kConstant = 0, kCosine = 1 };

struct AdamWConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
    LrSchedule schedule = LrSchedule::kConstant;
    std::int64_t total_steps = 0;  // cosine period; required for kCosine
    double lr_final = 0.0;
};

struct AdamWState {
    AdamWConfig config;
    std::vector<double> m;
    std::vector<double> v;
    std::int64_t step = 0;
    std::int64_t skipped = 0;  // non-finite-gradient incidents

    static AdamWState create(const AdamWConfig& config, std::size_t param_count);
};

// Learning rate the next step will use.
double scheduled_lr(const AdamWState& state);

// Decoupled weight decay update. Returns false (and logs an incident) when the
// gradient contains non-finite values; parameters are untouched in that case.
bool adamw_step(ParameterSet& params, const GradientSet& grads, AdamWState& state);

}  // namespace pairplan::nn
