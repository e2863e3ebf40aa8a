#include "rca/config.hpp"

#include "rca/rng.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <fstream>

namespace rca {

namespace {

const std::array<const char*, 36> kKnownKeys = {
    "seed",
    "threads",
    "batch_size_cycles",
    "ideal_cycle_seconds",
    "flag_factor",
    "frac_i1",
    "frac_i2",
    "frac_pca",
    "frac_xgb",
    "encoder_widths",
    "dropout_rate",
    "l1_coeff",
    "l2_coeff",
    "learning_rate",
    "lambda_ewc",
    "fisher_period_cycles",
    "replay_period_batches",
    "replay_capacity",
    "epochs_per_batch",
    "epochs_per_replay",
    "minibatch_rows",
    "score_with_max",
    "gbdt_rounds",
    "gbdt_max_depth",
    "gbdt_learning_rate",
    "gbdt_reg_lambda",
    "gbdt_min_child_hessian",
    "pca_components",
    "iforest_trees",
    "iforest_subsample",
    "iforest_contamination",
    "knn_k",
    "preset",
    "sim_d",
    "sim_cycles",
    "sim_states",
};

// sim_ideal_seconds / sim_anomaly_rate / sim_jitter complete the key set but
// the array above is fixed-size; keep them in a second list.
const std::array<const char*, 3> kKnownKeysExtra = {
    "sim_ideal_seconds",
    "sim_anomaly_rate",
    "sim_jitter",
};

bool known_key(const std::string& key) {
    for (const char* k : kKnownKeys)
        if (key == k) return true;
    for (const char* k : kKnownKeysExtra)
        if (key == k) return true;
    return false;
}

}  // namespace

void RunConfig::validate() const {
    if (threads < 1) throw ConfigError("threads must be >= 1");
    if (batch_size_cycles < 1) throw ConfigError("batch_size_cycles must be >= 1");
    if (ideal_cycle_seconds && *ideal_cycle_seconds <= 0.0)
        throw ConfigError("ideal_cycle_seconds must be positive");
    if (flag_factor <= 0.0) throw ConfigError("flag_factor must be positive");
    for (double frac : {selection.frac_i1, selection.frac_i2, selection.frac_pca,
                        selection.frac_xgb})
        if (!(frac > 0.0) || frac > 1.0)
            throw ConfigError("selection fractions must lie in (0, 1]");
    if (iae.encoder_widths.empty()) throw ConfigError("encoder_widths must be nonempty");
    for (int w : iae.encoder_widths)
        if (w < 1) throw ConfigError("encoder widths must be positive");
    if (iae.dropout_rate < 0.0 || iae.dropout_rate >= 1.0)
        throw ConfigError("dropout_rate must lie in [0, 1)");
    if (iae.learning_rate <= 0.0) throw ConfigError("learning_rate must be positive");
    if (iae.lambda_ewc < 0.0) throw ConfigError("lambda_ewc must be >= 0");
    if (iae.minibatch_rows < 1) throw ConfigError("minibatch_rows must be >= 1");
    if (iae.epochs_per_batch < 0 || iae.epochs_per_replay < 0)
        throw ConfigError("epoch counts must be >= 0");
    if (iae.replay_period_batches < 0) throw ConfigError("replay_period_batches must be >= 0");
    if (gbdt.num_rounds < 0) throw ConfigError("gbdt_rounds must be >= 0");
    if (gbdt.max_depth < 1) throw ConfigError("gbdt_max_depth must be >= 1");
    if (gbdt.learning_rate <= 0.0) throw ConfigError("gbdt_learning_rate must be positive");
    if (gbdt.reg_lambda < 0.0) throw ConfigError("gbdt_reg_lambda must be >= 0");
    if (pca_components && *pca_components < 1)
        throw ConfigError("pca_components must be >= 1 or omitted for auto");
    if (iforest.num_trees < 1 || iforest.subsample < 2)
        throw ConfigError("isolation forest needs >= 1 tree and subsample >= 2");
    if (iforest.contamination <= 0.0 || iforest.contamination > 1.0)
        throw ConfigError("iforest_contamination must lie in (0, 1]");
    if (knn_k < 1) throw ConfigError("knn_k must be >= 1");
    plant.validate();
}

nlohmann::ordered_json RunConfig::to_json() const {
    nlohmann::ordered_json j;
    j["seed"] = seed;
    j["threads"] = threads;
    j["batch_size_cycles"] = batch_size_cycles;
    if (ideal_cycle_seconds)
        j["ideal_cycle_seconds"] = *ideal_cycle_seconds;
    else
        j["ideal_cycle_seconds"] = nullptr;
    j["flag_factor"] = flag_factor;
    j["frac_i1"] = selection.frac_i1;
    j["frac_i2"] = selection.frac_i2;
    j["frac_pca"] = selection.frac_pca;
    j["frac_xgb"] = selection.frac_xgb;
    j["encoder_widths"] = iae.encoder_widths;
    j["dropout_rate"] = iae.dropout_rate;
    j["l1_coeff"] = iae.l1_coeff;
    j["l2_coeff"] = iae.l2_coeff;
    j["learning_rate"] = iae.learning_rate;
    j["lambda_ewc"] = iae.lambda_ewc;
    j["fisher_period_cycles"] = iae.fisher_period_cycles;
    j["replay_period_batches"] = iae.replay_period_batches;
    j["replay_capacity"] = iae.replay_capacity;
    j["epochs_per_batch"] = iae.epochs_per_batch;
    j["epochs_per_replay"] = iae.epochs_per_replay;
    j["minibatch_rows"] = iae.minibatch_rows;
    j["score_with_max"] = iae.score_with_max;
    j["gbdt_rounds"] = gbdt.num_rounds;
    j["gbdt_max_depth"] = gbdt.max_depth;
    j["gbdt_learning_rate"] = gbdt.learning_rate;
    j["gbdt_reg_lambda"] = gbdt.reg_lambda;
    j["gbdt_min_child_hessian"] = gbdt.min_child_hessian;
    if (pca_components)
        j["pca_components"] = *pca_components;
    else
        j["pca_components"] = "auto";
    j["iforest_trees"] = iforest.num_trees;
    j["iforest_subsample"] = iforest.subsample;
    j["iforest_contamination"] = iforest.contamination;
    j["knn_k"] = knn_k;
    j["preset"] = plant.preset;
    j["sim_d"] = plant.d;
    j["sim_cycles"] = plant.num_cycles;
    j["sim_states"] = plant.num_states;
    j["sim_ideal_seconds"] = plant.ideal_cycle_seconds;
    j["sim_anomaly_rate"] = plant.anomaly_rate;
    j["sim_jitter"] = plant.duration_jitter_frac;
    return j;
}

void RunConfig::apply_json(const nlohmann::json& overrides, const std::string& source) {
    if (!overrides.is_object())
        throw ConfigError(source + ": config must be a JSON object");
    for (const auto& [key, value] : overrides.items()) {
        if (!known_key(key)) throw ConfigError(source + ": unknown config key '" + key + "'");
        (void)value;
    }
    try {
        // The preset resets the plant shape; explicit sim_* keys then refine it.
        if (overrides.contains("preset") && !overrides["preset"].get<std::string>().empty())
            plant = preset_config(overrides["preset"].get<std::string>());

        for (const auto& [key, value] : overrides.items()) {
            if (key == "seed") seed = value.get<std::uint64_t>();
            else if (key == "threads") threads = value.get<int>();
            else if (key == "batch_size_cycles") batch_size_cycles = value.get<int>();
            else if (key == "ideal_cycle_seconds") {
                if (value.is_null())
                    ideal_cycle_seconds.reset();
                else
                    ideal_cycle_seconds = value.get<double>();
            } else if (key == "flag_factor") flag_factor = value.get<double>();
            else if (key == "frac_i1") selection.frac_i1 = value.get<double>();
            else if (key == "frac_i2") selection.frac_i2 = value.get<double>();
            else if (key == "frac_pca") selection.frac_pca = value.get<double>();
            else if (key == "frac_xgb") selection.frac_xgb = value.get<double>();
            else if (key == "encoder_widths") iae.encoder_widths = value.get<std::vector<int>>();
            else if (key == "dropout_rate") iae.dropout_rate = value.get<double>();
            else if (key == "l1_coeff") iae.l1_coeff = value.get<double>();
            else if (key == "l2_coeff") iae.l2_coeff = value.get<double>();
            else if (key == "learning_rate") iae.learning_rate = value.get<double>();
            else if (key == "lambda_ewc") iae.lambda_ewc = value.get<double>();
            else if (key == "fisher_period_cycles") iae.fisher_period_cycles = value.get<int>();
            else if (key == "replay_period_batches")
                iae.replay_period_batches = value.get<int>();
            else if (key == "replay_capacity") iae.replay_capacity = value.get<std::size_t>();
            else if (key == "epochs_per_batch") iae.epochs_per_batch = value.get<int>();
            else if (key == "epochs_per_replay") iae.epochs_per_replay = value.get<int>();
            else if (key == "minibatch_rows") iae.minibatch_rows = value.get<int>();
            else if (key == "score_with_max") iae.score_with_max = value.get<bool>();
            else if (key == "gbdt_rounds") gbdt.num_rounds = value.get<int>();
            else if (key == "gbdt_max_depth") gbdt.max_depth = value.get<int>();
            else if (key == "gbdt_learning_rate") gbdt.learning_rate = value.get<double>();
            else if (key == "gbdt_reg_lambda") gbdt.reg_lambda = value.get<double>();
            else if (key == "gbdt_min_child_hessian")
                gbdt.min_child_hessian = value.get<double>();
            else if (key == "pca_components") {
                if (value.is_string() && value.get<std::string>() == "auto")
                    pca_components.reset();
                else
                    pca_components = value.get<int>();
            } else if (key == "iforest_trees") iforest.num_trees = value.get<int>();
            else if (key == "iforest_subsample") iforest.subsample = value.get<int>();
            else if (key == "iforest_contamination")
                iforest.contamination = value.get<double>();
            else if (key == "knn_k") knn_k = value.get<int>();
            else if (key == "sim_d") plant.d = value.get<int>();
            else if (key == "sim_cycles") plant.num_cycles = value.get<int>();
            else if (key == "sim_states") plant.num_states = value.get<int>();
            else if (key == "sim_ideal_seconds") plant.ideal_cycle_seconds = value.get<double>();
            else if (key == "sim_anomaly_rate") plant.anomaly_rate = value.get<double>();
            else if (key == "sim_jitter") plant.duration_jitter_frac = value.get<double>();
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(source + ": bad value type: " + e.what());
    }
}

void RunConfig::apply_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config file '" + path + "': " + e.what());
    }
    apply_json(doc, "config file '" + path + "'");
}

void RunConfig::apply_env() {
    nlohmann::json overrides = nlohmann::json::object();
    auto consider = [&](const char* key) {
        std::string env_name = "RCA_";
        for (const char* p = key; *p; ++p)
            env_name += static_cast<char>(std::toupper(static_cast<unsigned char>(*p)));
        const char* value = std::getenv(env_name.c_str());
        if (!value) return;
        // Values parse as JSON when possible (numbers, arrays, booleans),
        // otherwise as literal strings (preset names).
        nlohmann::json parsed = nlohmann::json::parse(value, nullptr, false);
        overrides[key] = parsed.is_discarded() ? nlohmann::json(std::string(value)) : parsed;
    };
    for (const char* key : kKnownKeys) consider(key);
    for (const char* key : kKnownKeysExtra) consider(key);
    if (!overrides.empty()) apply_json(overrides, "environment");
}

EnsembleConfig RunConfig::ensemble_config() const {
    EnsembleConfig cfg;
    cfg.batch_size_cycles = batch_size_cycles;
    cfg.threads = threads;
    cfg.seed = seed;
    cfg.selection = selection;
    cfg.iae = iae;
    cfg.gbdt = gbdt;
    cfg.pca_components = pca_components;
    return cfg;
}

PlantConfig RunConfig::plant_config() const {
    PlantConfig cfg = plant;
    cfg.seed = seed;
    return cfg;
}

std::string content_hash_hex(const RunConfig& config, std::string_view input_bytes) {
    std::uint64_t h = fnv1a64(config.to_json().dump());
    for (unsigned char c : input_bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace rca
