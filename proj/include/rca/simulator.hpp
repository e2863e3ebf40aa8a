#pragma once

#include "rca/types.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>

namespace rca {

struct PlantConfig {
    int d = 26;
    int num_cycles = 400;
    int num_states = 14;
    double ideal_cycle_seconds = 140.0;
    double anomaly_rate = 0.1;
    double duration_jitter_frac = 0.1;
    std::uint64_t seed = 1;
    std::string preset;  // optional: synthetic-plc | welding | injection-molding

    void validate() const;
};

// Preset shapes: synthetic-plc (26 signals, 400 cycles, 14 states, 140 s),
// welding (20/2381/13/94 s), injection-molding (83/32/18/70 s).
PlantConfig preset_config(const std::string& name);

// Deterministic plant: per-state base signal patterns plus a small set of
// signals that toggle per visit (operational variance).
struct Plant {
    PlantConfig config;
    Matrix base_pattern;                      // num_states x d, entries {0,1}
    std::vector<int> variance_signals;        // signals free to toggle
    std::vector<std::vector<int>> free_states;  // per variance signal: states where it toggles
};

Plant build_plant(const PlantConfig& config);

struct SimResult {
    SignalLog log;
    GroundTruth truth;
};

// Emits num_cycles cycles. Anomalous cycles (Bernoulli anomaly_rate) get one
// anomaly kind applied to 1-3 features and a duration inflated past
// 1.1 * ideal; normal cycles stay within the duration jitter. All randomness
// flows from run_seed; regenerating with anomaly_rate = 0 reproduces the same
// base content, so diffing recovers exactly the perturbed features.
SimResult generate(const Plant& plant, std::uint64_t run_seed);

void write_ground_truth(const GroundTruth& truth, std::ostream& out);
void write_ground_truth_file(const GroundTruth& truth, const std::string& path);
GroundTruth read_ground_truth(std::istream& in);
GroundTruth read_ground_truth_file(const std::string& path);

}  // namespace rca
