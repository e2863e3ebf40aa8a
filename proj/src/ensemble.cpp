#include "rca/ensemble.hpp"

#include "rca/baselines.hpp"
#include "rca/cycles.hpp"
#include "rca/dependency.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <future>
#include <iostream>
#include <set>

namespace rca {

RootCauseReport score_features(const InterimResult& interim, int d) {
    RootCauseReport report;
    report.cycle_id = interim.cycle_id;
    report.lanes = interim;
    Eigen::VectorXi score = Eigen::VectorXi::Zero(d);
    auto add = [&](const std::vector<int>& set, int points) {
        for (int f : set) {
            if (f < 0 || f >= d)
                throw DataError("interim feature index " + std::to_string(f) + " out of range");
            score[f] += points;
        }
    };
    add(interim.i1a, 2);
    add(interim.i1b, 1);
    add(interim.i2, 1);
    add(interim.i3, 1);
    for (int f = 0; f < d; ++f)
        if (score[f] > 0) report.scores[f] = score[f];
    for (int f = 0; f < d; ++f)
        if (score[f] >= 2) report.root_causes.push_back(f);
    std::stable_sort(report.root_causes.begin(), report.root_causes.end(), [&](int a, int b) {
        if (score[a] != score[b]) return score[a] > score[b];
        return a < b;
    });
    return report;
}

namespace {

template <typename Fn>
std::vector<int> guarded_lane(const char* lane, int cycle_id, Fn&& fn) {
    try {
        return fn();
    } catch (const std::exception& e) {
        std::cerr << "rca: lane " << lane << " skipped for cycle " << cycle_id << ": " << e.what()
                  << "\n";
        return {};
    }
}

InterimResult interim_for_cycle(const Iae& iae, const GbdtModel& gbdt, const CycleSeries& cycle,
                                const EnsembleConfig& config) {
    InterimResult interim;
    interim.cycle_id = cycle.cycle_id;

    auto lane1 = [&] {
        CycleScore cs = iae.score_cycle(cycle, config.selection);
        return std::pair{cs.i1a, cs.i1b};
    };
    auto lane2 = [&] { return dependency_evidence(cycle, config.selection); };
    auto lane3 = [&] {
        PcaResult pca = pca_cycle(cycle, config.pca_components);
        return structural_evidence(pca, gbdt, config.selection);
    };

    auto run_lane1 = [&](auto&& invoke) {
        try {
            auto [i1a, i1b] = invoke();
            interim.i1a = std::move(i1a);
            interim.i1b = std::move(i1b);
        } catch (const std::exception& e) {
            std::cerr << "rca: lane iae skipped for cycle " << cycle.cycle_id << ": " << e.what()
                      << "\n";
        }
    };
    if (config.threads > 1) {
        auto f1 = std::async(std::launch::async, lane1);
        auto f2 = std::async(std::launch::async, lane2);
        auto f3 = std::async(std::launch::async, lane3);
        run_lane1([&] { return f1.get(); });
        interim.i2 = guarded_lane("dependency", cycle.cycle_id, [&] { return f2.get(); });
        interim.i3 = guarded_lane("structural", cycle.cycle_id, [&] { return f3.get(); });
    } else {
        run_lane1(lane1);
        interim.i2 = guarded_lane("dependency", cycle.cycle_id, lane2);
        interim.i3 = guarded_lane("structural", cycle.cycle_id, lane3);
    }
    return interim;
}

}  // namespace

std::vector<RootCauseReport> process_batch(Iae& iae, const CycleBatch& batch,
                                           const EnsembleConfig& config) {
    iae.train_batch(batch);
    GbdtModel gbdt = gbdt_train(batch, config.gbdt);

    std::vector<RootCauseReport> reports;
    const int d = static_cast<int>(batch.stacked.cols());
    std::size_t row_offset = 0;
    for (const auto& cycle : batch.cycles) {
        // labels_per_row expands the per-cycle flag row-wise; the first row
        // of each cycle carries its flag.
        const bool flagged = batch.labels_per_row[row_offset] == 1;
        row_offset += static_cast<std::size_t>(cycle.rows());
        if (!flagged) continue;
        InterimResult interim = interim_for_cycle(iae, gbdt, cycle, config);
        reports.push_back(score_features(interim, d));
    }
    return reports;
}

StreamAnalyzer::StreamAnalyzer(int d, EnsembleConfig config)
    : config_(std::move(config)), iae_(d, [&] {
          IaeConfig iae_cfg = config_.iae;
          iae_cfg.seed = derive_seed(config_.seed, "iae");
          return iae_cfg;
      }()) {}

std::vector<RootCauseReport> StreamAnalyzer::push_cycle(const CycleSeries& cycle, int flag) {
    pending_.push_back(cycle);
    pending_flags_.push_back(flag);
    if (static_cast<int>(pending_.size()) < config_.batch_size_cycles) return {};
    return finalize();
}

std::vector<RootCauseReport> StreamAnalyzer::finalize() {
    if (pending_.empty()) return {};
    CycleBatch batch = assemble_batch(pending_, pending_flags_);
    pending_.clear();
    pending_flags_.clear();
    return process_batch(iae_, batch, config_);
}

std::vector<RootCauseReport> run_stream(const std::vector<CycleSeries>& cycles,
                                        const std::vector<ProductivityFlag>& flags,
                                        const EnsembleConfig& config, Iae* final_iae) {
    if (cycles.empty()) return {};
    if (flags.size() != cycles.size()) throw DataError("flags must cover every cycle");
    StreamAnalyzer analyzer(static_cast<int>(cycles.front().dims()), config);
    std::vector<RootCauseReport> reports;
    for (std::size_t i = 0; i < cycles.size(); ++i) {
        auto out = analyzer.push_cycle(cycles[i], flags[i].flag);
        reports.insert(reports.end(), out.begin(), out.end());
    }
    auto tail = analyzer.finalize();
    reports.insert(reports.end(), tail.begin(), tail.end());
    if (final_iae) *final_iae = analyzer.iae();
    return reports;
}

ModelKind model_kind_from_string(const std::string& name) {
    if (name == "ensemble") return ModelKind::Ensemble;
    if (name == "iae") return ModelKind::IaeOnly;
    if (name == "pca") return ModelKind::PcaOnly;
    if (name == "mi") return ModelKind::MiOnly;
    if (name == "iforest") return ModelKind::IsolationForest;
    if (name == "knn") return ModelKind::Knn;
    throw ConfigError("unknown model '" + name +
                      "' (expected ensemble|iae|pca|mi|iforest|knn)");
}

std::string to_string(ModelKind kind) {
    switch (kind) {
        case ModelKind::Ensemble: return "ensemble";
        case ModelKind::IaeOnly: return "iae";
        case ModelKind::PcaOnly: return "pca";
        case ModelKind::MiOnly: return "mi";
        case ModelKind::IsolationForest: return "iforest";
        case ModelKind::Knn: return "knn";
    }
    return "ensemble";
}

namespace {

RootCauseReport report_from_set(int cycle_id, const std::vector<int>& set, int d,
                                std::vector<int> InterimResult::*lane) {
    RootCauseReport report;
    report.cycle_id = cycle_id;
    report.lanes.cycle_id = cycle_id;
    if (lane) report.lanes.*lane = set;
    std::vector<int> sorted = set;
    std::sort(sorted.begin(), sorted.end());
    for (int f : sorted) {
        if (f < 0 || f >= d) throw DataError("feature index out of range in report");
        report.scores[f] = 2;
        report.root_causes.push_back(f);
    }
    return report;
}

// Per-batch loop shared by the single-lane and baseline modes.
template <typename TrainFn, typename ScoreFn>
std::vector<RootCauseReport> run_batched(const std::vector<CycleSeries>& cycles,
                                         const std::vector<ProductivityFlag>& flags, int a,
                                         TrainFn&& train, ScoreFn&& score) {
    std::vector<RootCauseReport> reports;
    auto batches = make_batches(cycles, flags, a);
    std::size_t cursor = 0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
        train(batches[b], b);
        for (std::size_t i = 0; i < batches[b].cycles.size(); ++i, ++cursor) {
            if (flags[cursor].flag != 1) continue;
            reports.push_back(score(batches[b].cycles[i], b));
        }
    }
    return reports;
}

}  // namespace

std::vector<RootCauseReport> run_model(ModelKind kind, const std::vector<CycleSeries>& cycles,
                                       const std::vector<ProductivityFlag>& flags,
                                       const EnsembleConfig& config, Iae* final_iae) {
    if (cycles.empty()) return {};
    const int d = static_cast<int>(cycles.front().dims());
    const SelectionPolicy& policy = config.selection;

    switch (kind) {
        case ModelKind::Ensemble:
            return run_stream(cycles, flags, config, final_iae);

        case ModelKind::IaeOnly: {
            IaeConfig iae_cfg = config.iae;
            iae_cfg.seed = derive_seed(config.seed, "iae");
            Iae iae(d, iae_cfg);
            auto reports = run_batched(
                cycles, flags, config.batch_size_cycles,
                [&](const CycleBatch& batch, std::size_t) { iae.train_batch(batch); },
                [&](const CycleSeries& cycle, std::size_t) {
                    CycleScore cs = iae.score_cycle(cycle, policy);
                    std::vector<int> both = cs.i1a;
                    both.insert(both.end(), cs.i1b.begin(), cs.i1b.end());
                    RootCauseReport r = report_from_set(cycle.cycle_id, both, d, nullptr);
                    r.lanes.i1a = cs.i1a;
                    r.lanes.i1b = cs.i1b;
                    return r;
                });
            if (final_iae) *final_iae = iae;
            return reports;
        }

        case ModelKind::PcaOnly:
            return run_batched(
                cycles, flags, config.batch_size_cycles, [](const CycleBatch&, std::size_t) {},
                [&](const CycleSeries& cycle, std::size_t) {
                    auto set = guarded_lane("pca", cycle.cycle_id, [&] {
                        PcaResult pca = pca_cycle(cycle, config.pca_components);
                        return select_top_fraction(pca.feature_scores, policy.frac_pca);
                    });
                    return report_from_set(cycle.cycle_id, set, d, &InterimResult::i3);
                });

        case ModelKind::MiOnly:
            return run_batched(
                cycles, flags, config.batch_size_cycles, [](const CycleBatch&, std::size_t) {},
                [&](const CycleSeries& cycle, std::size_t) {
                    auto set = guarded_lane("dependency", cycle.cycle_id,
                                            [&] { return dependency_evidence(cycle, policy); });
                    return report_from_set(cycle.cycle_id, set, d, &InterimResult::i2);
                });

        case ModelKind::IsolationForest: {
            IsolationForestParams params;
            IsolationForestModel model;
            return run_batched(
                cycles, flags, config.batch_size_cycles,
                [&](const CycleBatch& batch, std::size_t b) {
                    model = iforest_train(batch.stacked, params,
                                          derive_seed(config.seed, "iforest", b));
                },
                [&](const CycleSeries& cycle, std::size_t) {
                    auto set = guarded_lane("iforest", cycle.cycle_id, [&] {
                        return iforest_root_causes(model, cycle, policy);
                    });
                    return report_from_set(cycle.cycle_id, set, d, nullptr);
                });
        }

        case ModelKind::Knn: {
            KnnModel model;
            model.reference.resize(0, d);
            return run_batched(
                cycles, flags, config.batch_size_cycles,
                [&](const CycleBatch& batch, std::size_t) {
                    // Reference set: rows of normal cycles seen so far.
                    Eigen::Index normal_rows = 0;
                    for (int label : batch.labels_per_row) normal_rows += label == 0 ? 1 : 0;
                    if (normal_rows == 0) return;
                    Matrix grown(model.reference.rows() + normal_rows, d);
                    grown.topRows(model.reference.rows()) = model.reference;
                    Eigen::Index at = model.reference.rows();
                    for (Eigen::Index r = 0; r < batch.stacked.rows(); ++r)
                        if (batch.labels_per_row[static_cast<std::size_t>(r)] == 0)
                            grown.row(at++) = batch.stacked.row(r);
                    model.reference = std::move(grown);
                },
                [&](const CycleSeries& cycle, std::size_t) {
                    auto set = guarded_lane("knn", cycle.cycle_id,
                                            [&] { return knn_root_causes(model, cycle, policy); });
                    return report_from_set(cycle.cycle_id, set, d, nullptr);
                });
        }
    }
    throw ConfigError("unhandled model kind");
}

void write_reports_jsonl(const std::vector<RootCauseReport>& reports,
                         const std::vector<std::string>& feature_names, ModelKind kind,
                         std::ostream& out) {
    auto name_of = [&](int f) {
        return f < static_cast<int>(feature_names.size()) ? feature_names[static_cast<std::size_t>(f)]
                                                          : "signal_" + std::to_string(f + 1);
    };
    for (const auto& report : reports) {
        nlohmann::ordered_json line;
        line["cycle"] = report.cycle_id;
        line["model"] = to_string(kind);
        nlohmann::ordered_json scores = nlohmann::ordered_json::object();
        for (const auto& [f, s] : report.scores) scores[name_of(f)] = s;
        line["scores"] = scores;
        nlohmann::ordered_json causes = nlohmann::ordered_json::array();
        for (int f : report.root_causes) causes.push_back(name_of(f));
        line["root_causes"] = causes;
        nlohmann::ordered_json lanes;
        auto lane_names = [&](const std::vector<int>& lane) {
            nlohmann::ordered_json arr = nlohmann::ordered_json::array();
            for (int f : lane) arr.push_back(name_of(f));
            return arr;
        };
        lanes["i1a"] = lane_names(report.lanes.i1a);
        lanes["i1b"] = lane_names(report.lanes.i1b);
        lanes["i2"] = lane_names(report.lanes.i2);
        lanes["i3"] = lane_names(report.lanes.i3);
        line["lanes"] = lanes;
        out << line.dump() << '\n';
    }
}

namespace {

int feature_index_from_name(const std::string& name) {
    const auto pos = name.rfind('_');
    if (pos == std::string::npos)
        throw DataError("cannot map feature name '" + name + "' to an index");
    try {
        return std::stoi(name.substr(pos + 1)) - 1;
    } catch (const std::exception&) {
        throw DataError("cannot map feature name '" + name + "' to an index");
    }
}

}  // namespace

std::vector<ParsedReport> read_reports_jsonl(std::istream& in) {
    std::vector<ParsedReport> reports;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw DataError("invalid report JSON: " + std::string(e.what()), line_no);
        }
        ParsedReport report;
        report.cycle_id = j.at("cycle").get<int>();
        report.model = j.value("model", "");
        for (const auto& name : j.at("root_causes"))
            report.root_causes.push_back(feature_index_from_name(name.get<std::string>()));
        if (j.contains("scores"))
            for (const auto& [name, score] : j["scores"].items())
                report.scores_by_name[name] = score.get<int>();
        reports.push_back(std::move(report));
    }
    return reports;
}

std::vector<ParsedReport> read_reports_jsonl_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open reports file '" + path + "'");
    return read_reports_jsonl(in);
}

}  // namespace rca
