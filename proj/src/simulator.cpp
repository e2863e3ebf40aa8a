#include "rca/simulator.hpp"

#include "rca/log_io.hpp"
#include "rca/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

namespace rca {

namespace {

// Flagging threshold the generator guarantees against (duration policy default).
constexpr double kFlagFactor = 1.1;

// Log timestamps start at 2024-01-01T08:00:00.
constexpr std::int64_t kBaseEpochUs = (19'723LL * 86'400 + 8 * 3'600) * 1'000'000;

struct CyclePlan {
    std::vector<int> rows_per_state;            // rows emitted per state visit
    std::vector<double> dwell_weights;          // relative dwell share per state
    std::vector<std::vector<double>> row_fracs;  // row positions within each state dwell
    double normal_duration;                     // target duration without anomaly
    Matrix content;                             // base + operational variance, no anomaly
};

// Everything here is drawn from the per-cycle content stream, so the plan is
// identical whether or not an anomaly is injected on top.
CyclePlan plan_cycle(const Plant& plant, Rng& rng) {
    const PlantConfig& cfg = plant.config;
    const int S = cfg.num_states;
    const int d = cfg.d;
    CyclePlan plan;
    plan.rows_per_state.resize(static_cast<std::size_t>(S));
    plan.dwell_weights.resize(static_cast<std::size_t>(S));
    plan.row_fracs.resize(static_cast<std::size_t>(S));
    int total_rows = 0;
    for (int s = 0; s < S; ++s) {
        plan.rows_per_state[s] = 2 + static_cast<int>(uniform_index(rng, 2));  // 2 or 3
        plan.dwell_weights[s] = 1.0 + 0.3 * (2.0 * uniform01(rng) - 1.0);
        auto& fracs = plan.row_fracs[s];
        fracs.push_back(0.0);  // state-entry row
        for (int r = 1; r < plan.rows_per_state[s]; ++r)
            fracs.push_back(0.1 + 0.8 * uniform01(rng));
        std::sort(fracs.begin(), fracs.end());
        total_rows += plan.rows_per_state[s];
    }
    // Normal durations are capped below the flag threshold so duration-based
    // flags and ground truth always coincide.
    const double jitter_up = std::min(cfg.duration_jitter_frac, 0.9 * (kFlagFactor - 1.0));
    const double u = uniform01(rng);
    plan.normal_duration =
        cfg.ideal_cycle_seconds *
        (1.0 - cfg.duration_jitter_frac + (cfg.duration_jitter_frac + jitter_up) * u);

    plan.content.resize(total_rows + 1, d);  // +1 closing row in the last state
    int at = 0;
    for (int s = 0; s < S; ++s) {
        Vector visit = plant.base_pattern.row(s).transpose();
        for (std::size_t vi = 0; vi < plant.variance_signals.size(); ++vi) {
            const int f = plant.variance_signals[vi];
            const auto& free = plant.free_states[vi];
            const bool state_is_free =
                std::find(free.begin(), free.end(), s) != free.end();
            const bool toggled = uniform01(rng) < 0.3;
            if (state_is_free && toggled) visit[f] = 1.0 - visit[f];
        }
        for (int r = 0; r < plan.rows_per_state[s]; ++r) plan.content.row(at++) = visit;
    }
    plan.content.row(at) = plan.content.row(at - 1);  // closing row, state S
    return plan;
}

std::vector<int> state_row_span(const CyclePlan& plan, int state_begin, int state_end) {
    std::vector<int> rows;
    int at = 0;
    for (int s = 0; s < static_cast<int>(plan.rows_per_state.size()); ++s) {
        for (int r = 0; r < plan.rows_per_state[s]; ++r, ++at)
            if (s >= state_begin && s < state_end) rows.push_back(at);
    }
    return rows;
}

struct AnomalyDraw {
    bool anomalous = false;
    AnomalyKind kind = AnomalyKind::None;
    std::vector<int> features;
    int span_begin = 0;  // first affected state (0-based)
    int span_len = 0;
    double duration;     // inflated target duration
};

AnomalyDraw draw_anomaly(const PlantConfig& cfg, Rng& rng) {
    AnomalyDraw a;
    a.anomalous = uniform01(rng) < cfg.anomaly_rate;
    if (!a.anomalous) return a;
    switch (uniform_index(rng, 3)) {
        case 0: a.kind = AnomalyKind::StuckSignal; break;
        case 1: a.kind = AnomalyKind::DelayedTransition; break;
        default: a.kind = AnomalyKind::DroppedSignal; break;
    }
    const double mu = uniform01(rng);
    const int m = mu < 0.4 ? 1 : (mu < 0.8 ? 2 : 3);
    std::set<int> chosen;
    while (static_cast<int>(chosen.size()) < std::min(m, cfg.d))
        chosen.insert(static_cast<int>(uniform_index(rng, static_cast<std::size_t>(cfg.d))));
    a.features.assign(chosen.begin(), chosen.end());
    // The last state is reserved for the cycle-closing row; anomalies span up
    // to 3 of the remaining states.
    const int usable = std::max(1, cfg.num_states - 1);
    a.span_len = std::min(3, usable);
    a.span_begin = static_cast<int>(uniform_index(
        rng, static_cast<std::size_t>(usable - a.span_len + 1)));
    a.duration = cfg.ideal_cycle_seconds * (1.35 + 0.45 * uniform01(rng));
    return a;
}

// Applies the drawn anomaly to `content` (already holding the clean plan).
// Guarantees every target feature's column actually differs from the clean
// matrix so ground truth can be recovered by diffing.
void apply_anomaly(const CyclePlan& plan, const AnomalyDraw& a, Matrix& content) {
    const auto span_rows = state_row_span(plan, a.span_begin, a.span_begin + a.span_len);
    const auto last_state_rows =
        state_row_span(plan, a.span_begin + a.span_len - 1, a.span_begin + a.span_len);
    for (int f : a.features) {
        const Vector clean_col = content.col(f);
        switch (a.kind) {
            case AnomalyKind::StuckSignal: {
                const double held = content(span_rows.front(), f);
                for (int r : span_rows) content(r, f) = held;
                break;
            }
            case AnomalyKind::DelayedTransition: {
                // The transition into the span is late: rows keep the value
                // of the last row before the span.
                const int before = span_rows.front() > 0 ? span_rows.front() - 1 : 0;
                const double held = content(before, f);
                for (int r : span_rows) content(r, f) = held;
                break;
            }
            case AnomalyKind::DroppedSignal: {
                bool any_one = false;
                for (int r : span_rows) any_one = any_one || content(r, f) > 0.5;
                for (int r : span_rows) content(r, f) = any_one ? 0.0 : 1.0;
                break;
            }
            case AnomalyKind::None: break;
        }
        if ((content.col(f) - clean_col).cwiseAbs().maxCoeff() == 0.0) {
            // Edit coincided with the clean pattern; force a visible fault.
            for (int r : last_state_rows) content(r, f) = 1.0 - content(r, f);
        }
    }
}

}  // namespace

void PlantConfig::validate() const {
    if (d < 2) throw ConfigError("plant needs d >= 2 signals");
    if (num_states < 2) throw ConfigError("plant needs num_states >= 2");
    if (num_cycles < 1) throw ConfigError("plant needs num_cycles >= 1");
    if (ideal_cycle_seconds <= 0) throw ConfigError("ideal_cycle_seconds must be positive");
    if (anomaly_rate < 0.0 || anomaly_rate > 1.0)
        throw ConfigError("anomaly_rate must lie in [0,1]");
    if (duration_jitter_frac < 0.0 || duration_jitter_frac >= 1.0)
        throw ConfigError("duration_jitter_frac must lie in [0,1)");
}

PlantConfig preset_config(const std::string& name) {
    PlantConfig cfg;
    cfg.preset = name;
    if (name == "synthetic-plc") {
        cfg.d = 26;
        cfg.num_cycles = 400;
        cfg.num_states = 14;
        cfg.ideal_cycle_seconds = 140.0;
        cfg.anomaly_rate = 0.1;
    } else if (name == "welding") {
        cfg.d = 20;
        cfg.num_cycles = 2381;
        cfg.num_states = 13;
        cfg.ideal_cycle_seconds = 94.0;
        cfg.anomaly_rate = 0.1;
    } else if (name == "injection-molding") {
        cfg.d = 83;
        cfg.num_cycles = 32;
        cfg.num_states = 18;
        cfg.ideal_cycle_seconds = 70.0;
        cfg.anomaly_rate = 0.1;
    } else {
        throw ConfigError("unknown preset '" + name + "'");
    }
    return cfg;
}

Plant build_plant(const PlantConfig& config) {
    config.validate();
    Plant plant;
    plant.config = config;
    Rng rng(derive_seed(config.seed, "plant-pattern"));
    plant.base_pattern.resize(config.num_states, config.d);
    for (int s = 0; s < config.num_states; ++s)
        for (int f = 0; f < config.d; ++f)
            plant.base_pattern(s, f) = uniform01(rng) < 0.5 ? 0.0 : 1.0;

    // A small subset of signals toggles stochastically, each in a few
    // designated states.
    const int n_var = std::max(1, config.d / 8);
    std::set<int> vs;
    while (static_cast<int>(vs.size()) < n_var)
        vs.insert(static_cast<int>(uniform_index(rng, static_cast<std::size_t>(config.d))));
    plant.variance_signals.assign(vs.begin(), vs.end());
    const int n_free = std::max(1, config.num_states / 5);
    for (std::size_t i = 0; i < plant.variance_signals.size(); ++i) {
        std::set<int> states;
        while (static_cast<int>(states.size()) < n_free)
            states.insert(
                static_cast<int>(uniform_index(rng, static_cast<std::size_t>(config.num_states))));
        plant.free_states.emplace_back(states.begin(), states.end());
    }
    return plant;
}

SimResult generate(const Plant& plant, std::uint64_t run_seed) {
    const PlantConfig& cfg = plant.config;
    SimResult result;
    result.log.feature_names.reserve(static_cast<std::size_t>(cfg.d));
    for (int f = 1; f <= cfg.d; ++f)
        result.log.feature_names.push_back("signal_" + std::to_string(f));

    double clock_seconds = 0.0;
    for (int c = 1; c <= cfg.num_cycles; ++c) {
        Rng content_rng(derive_seed(run_seed, "sim-content", static_cast<std::uint64_t>(c)));
        Rng anomaly_rng(derive_seed(run_seed, "sim-anomaly", static_cast<std::uint64_t>(c)));

        CyclePlan plan = plan_cycle(plant, content_rng);
        AnomalyDraw anomaly = draw_anomaly(cfg, anomaly_rng);

        Matrix content = plan.content;
        if (anomaly.anomalous) apply_anomaly(plan, anomaly, content);

        // Dwell allocation: the normal share per state, plus all anomaly
        // inflation concentrated on the affected span (the delayed process).
        const double weight_sum =
            std::accumulate(plan.dwell_weights.begin(), plan.dwell_weights.end(), 0.0);
        const double duration = anomaly.anomalous ? anomaly.duration : plan.normal_duration;
        const double extra = anomaly.anomalous ? anomaly.duration - plan.normal_duration : 0.0;
        std::vector<double> dwell(plan.dwell_weights.size());
        for (std::size_t s = 0; s < dwell.size(); ++s) {
            dwell[s] = plan.normal_duration * plan.dwell_weights[s] / weight_sum;
            if (anomaly.anomalous && static_cast<int>(s) >= anomaly.span_begin &&
                static_cast<int>(s) < anomaly.span_begin + anomaly.span_len)
                dwell[s] += extra / anomaly.span_len;
        }

        int at = 0;
        double state_start = clock_seconds;
        for (int s = 0; s < cfg.num_states; ++s) {
            for (double frac : plan.row_fracs[s]) {
                LogRow row;
                row.timestamp_us =
                    kBaseEpochUs +
                    static_cast<std::int64_t>(std::llround((state_start + frac * dwell[s]) * 1e6));
                row.signals.resize(static_cast<std::size_t>(cfg.d));
                for (int f = 0; f < cfg.d; ++f)
                    row.signals[f] = content(at, f) > 0.5 ? 1 : 0;
                row.cycle = c;
                row.state = s + 1;
                result.log.rows.push_back(std::move(row));
                ++at;
            }
            state_start += dwell[s];
        }
        {
            // Closing row pins the measured cycle duration to the target.
            LogRow row;
            row.timestamp_us =
                kBaseEpochUs +
                static_cast<std::int64_t>(std::llround((clock_seconds + duration) * 1e6)) - 1000;
            row.signals.resize(static_cast<std::size_t>(cfg.d));
            for (int f = 0; f < cfg.d; ++f) row.signals[f] = content(at, f) > 0.5 ? 1 : 0;
            row.cycle = c;
            row.state = cfg.num_states;
            result.log.rows.push_back(std::move(row));
        }

        CycleTruth truth;
        truth.cycle_id = c;
        truth.flag = anomaly.anomalous ? 1 : 0;
        truth.root_cause_features = anomaly.features;
        truth.anomaly_kind = anomaly.kind;
        result.truth.cycles.push_back(std::move(truth));

        clock_seconds += duration;
    }
    return result;
}

void write_ground_truth(const GroundTruth& truth, std::ostream& out) {
    nlohmann::ordered_json doc = nlohmann::ordered_json::array();
    for (const auto& ct : truth.cycles) {
        nlohmann::ordered_json item;
        item["cycle"] = ct.cycle_id;
        item["flag"] = ct.flag;
        item["root_cause_features"] = ct.root_cause_features;
        item["anomaly_kind"] = to_string(ct.anomaly_kind);
        doc.push_back(std::move(item));
    }
    out << doc.dump(2) << '\n';
}

void write_ground_truth_file(const GroundTruth& truth, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write ground truth file '" + path + "'");
    write_ground_truth(truth, out);
}

GroundTruth read_ground_truth(std::istream& in) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("invalid ground truth JSON: ") + e.what());
    }
    if (!doc.is_array()) throw DataError("ground truth must be a JSON array");
    GroundTruth truth;
    for (const auto& item : doc) {
        CycleTruth ct;
        ct.cycle_id = item.at("cycle").get<int>();
        ct.flag = item.at("flag").get<int>();
        ct.root_cause_features = item.at("root_cause_features").get<std::vector<int>>();
        if (item.contains("anomaly_kind"))
            ct.anomaly_kind = anomaly_kind_from_string(item["anomaly_kind"].get<std::string>());
        if ((ct.flag == 1) != !ct.root_cause_features.empty())
            throw DataError("ground truth flag and root_cause_features disagree for cycle " +
                            std::to_string(ct.cycle_id));
        truth.cycles.push_back(std::move(ct));
    }
    return truth;
}

GroundTruth read_ground_truth_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open ground truth file '" + path + "'");
    return read_ground_truth(in);
}

}  // namespace rca
