#pragma once

#include "rca/baselines.hpp"
#include "rca/ensemble.hpp"
#include "rca/simulator.hpp"
#include "rca/structural.hpp"

#include <nlohmann/json.hpp>

#include <optional>
#include <string>

namespace rca {

// Every tunable in one place, with the validation defaults. Layering:
// defaults < config file < RCA_* environment < CLI flags.
struct RunConfig {
    std::uint64_t seed = 1;
    int threads = 1;
    int batch_size_cycles = 5;

    std::optional<double> ideal_cycle_seconds;  // unset: median + 3*MAD fallback
    double flag_factor = 1.1;

    SelectionPolicy selection;
    IaeConfig iae;
    GbdtParams gbdt;
    std::optional<int> pca_components;  // unset: cover 90% variance

    IsolationForestParams iforest;
    int knn_k = 10;

    PlantConfig plant;

    void validate() const;
    nlohmann::ordered_json to_json() const;

    // Applies a flat JSON object; unknown keys are rejected. `source` names
    // the layer for error messages.
    void apply_json(const nlohmann::json& overrides, const std::string& source);
    void apply_file(const std::string& path);
    void apply_env();  // RCA_<UPPER_KEY> variables

    EnsembleConfig ensemble_config() const;
    PlantConfig plant_config() const;
};

// FNV-1a of the canonical config dump plus the input bytes; names run
// directories so identical runs land in identical places.
std::string content_hash_hex(const RunConfig& config, std::string_view input_bytes);

}  // namespace rca
