#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace pairplan::nn {

inline constexpr const char* kCheckpointFormat = "pairplan_ckpt_v1";

// On-disk checkpoint payload: little-endian binary, length-prefixed strings,
// 64-bit float parameter arrays, optional optimizer moments. Round trips are
// bit-exact.
struct CheckpointData {
    std::string role;        // "il", "rl", "rwm"
    std::uint64_t rng_seed = 0;
    std::uint64_t step_count = 0;
    std::string meta_json;   // manifest + module configuration
    std::vector<double> params;
    bool has_optimizer = false;
    std::uint64_t opt_step = 0;
    std::vector<double> opt_m;
    std::vector<double> opt_v;
};

void save_checkpoint_file(const std::string& path, const CheckpointData& data);

// Throws FormatError on version mismatch (naming expected/found) or on a
// truncated/trailing-garbage file; never returns partial state.
CheckpointData load_checkpoint_file(const std::string& path);

}  // namespace pairplan::nn
