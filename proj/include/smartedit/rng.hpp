#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace smartedit {

/// Counter-based pseudo-random generator keyed by (global_seed, stream name).
///
/// Streams with different names are statistically independent, so data
/// generation, weight init and noise draws can be reproduced in isolation.
/// The sequence depends only on (key, call order), never on global state.
class Rng {
public:
    Rng(uint64_t global_seed, std::string_view stream);

    /// Derive an independent child stream from this one.
    Rng split(std::string_view substream) const;

    uint64_t next_u64();

    /// Uniform double in [0, 1).
    double uniform();

    /// Uniform double in [lo, hi).
    double uniform(double lo, double hi);

    /// Inclusive integer range.
    int64_t uniform_int(int64_t lo, int64_t hi);

    /// Standard normal via Box-Muller (pairs cached).
    double normal();

private:
    Rng(uint64_t key) : key_(key) {}

    uint64_t key_ = 0;
    uint64_t counter_ = 0;
    double cached_normal_ = 0.0;
    bool has_cached_normal_ = false;
};

}  // namespace smartedit
