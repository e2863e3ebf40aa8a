#pragma once

#include "rca/types.hpp"

#include <map>
#include <optional>
#include <vector>

namespace rca {

// One CycleSeries per distinct cycle id, in log order. Concatenating the
// results row-wise reproduces the log exactly (segmentation is a partition).
std::vector<CycleSeries> segment_cycles(const SignalLog& log);

struct DurationFlagPolicy {
    std::optional<double> ideal_cycle_seconds;
    double factor = 1.1;
};

// P=1 iff duration > factor * ideal. Without an ideal, falls back to
// median + 3*MAD over the observed durations (requires >= 8 cycles).
std::vector<ProductivityFlag> flag_productivity(const std::vector<CycleSeries>& cycles,
                                                const DurationFlagPolicy& policy);

// External labels pass through verbatim; every cycle must be covered.
std::vector<ProductivityFlag> flag_productivity(const std::vector<CycleSeries>& cycles,
                                                const std::map<int, int>& labels);

// Non-overlapping consecutive windows of `a` cycles; a trailing partial
// window is emitted so every cycle is analyzed.
std::vector<CycleBatch> make_batches(const std::vector<CycleSeries>& cycles,
                                     const std::vector<ProductivityFlag>& flags, int a);

// Builds one batch from already-selected consecutive cycles.
CycleBatch assemble_batch(const std::vector<CycleSeries>& cycles,
                          const std::vector<int>& flags);

// The max(1, round(frac*d)) highest-scoring feature indices, ordered by
// descending score with ties broken toward the lower index. Rounding is
// half-away-from-zero.
std::vector<int> select_top_fraction(const Vector& scores, double frac);

// Next `count` indices after skipping the `skip` best ones; same ordering
// rule. Used for the runner-up evidence set.
std::vector<int> select_next_block(const Vector& scores, int skip, int count);

}  // namespace rca
