#pragma once

#include "rca/net.hpp"
#include "rca/structural.hpp"
#include "rca/types.hpp"

#include <deque>
#include <iosfwd>
#include <map>
#include <optional>
#include <vector>

namespace rca {

struct InterimResult {
    int cycle_id = 0;
    std::vector<int> i1a;
    std::vector<int> i1b;
    std::vector<int> i2;
    std::vector<int> i3;
};

struct RootCauseReport {
    int cycle_id = 0;
    std::map<int, int> scores;     // feature -> s(f); zero scores omitted
    std::vector<int> root_causes;  // {f : s(f) >= 2}, best score first
    InterimResult lanes;
};

// s(f) = 2*[f in I_1a] + [f in I_1b] + [f in I_2] + [f in I_3];
// a feature is a root cause when s(f) >= 2.
RootCauseReport score_features(const InterimResult& interim, int d);

struct EnsembleConfig {
    int batch_size_cycles = 5;
    int threads = 1;
    std::uint64_t seed = 1;
    SelectionPolicy selection;
    IaeConfig iae;
    GbdtParams gbdt;
    std::optional<int> pca_components;  // nullopt: cover 90% variance
};

// Trains the IAE and the batch GBDT, then scores every flagged cycle through
// the three lanes. A lane that fails on a cycle contributes an empty set and
// the other lanes proceed.
std::vector<RootCauseReport> process_batch(Iae& iae, const CycleBatch& batch,
                                           const EnsembleConfig& config);

// Incremental front end: push cycles as they arrive; reports come back as
// soon as their batch completes. One-shot and streaming use produce
// identical reports on identical input.
class StreamAnalyzer {
public:
    StreamAnalyzer(int d, EnsembleConfig config);

    std::vector<RootCauseReport> push_cycle(const CycleSeries& cycle, int flag);
    std::vector<RootCauseReport> finalize();  // flushes the trailing partial batch

    const Iae& iae() const { return iae_; }
    Iae& iae() { return iae_; }

private:
    EnsembleConfig config_;
    Iae iae_;
    std::vector<CycleSeries> pending_;
    std::vector<int> pending_flags_;
};

std::vector<RootCauseReport> run_stream(const std::vector<CycleSeries>& cycles,
                                        const std::vector<ProductivityFlag>& flags,
                                        const EnsembleConfig& config, Iae* final_iae = nullptr);

enum class ModelKind { Ensemble, IaeOnly, PcaOnly, MiOnly, IsolationForest, Knn };

ModelKind model_kind_from_string(const std::string& name);
std::string to_string(ModelKind kind);

// Runs the selected model over the stream with the shared batching and flag
// inputs. Single-lane and baseline modes exist to reproduce per-component
// comparisons; their reports mark every selected feature as a root cause.
std::vector<RootCauseReport> run_model(ModelKind kind, const std::vector<CycleSeries>& cycles,
                                       const std::vector<ProductivityFlag>& flags,
                                       const EnsembleConfig& config, Iae* final_iae = nullptr);

void write_reports_jsonl(const std::vector<RootCauseReport>& reports,
                         const std::vector<std::string>& feature_names, ModelKind kind,
                         std::ostream& out);

struct ParsedReport {
    int cycle_id = 0;
    std::string model;
    std::vector<int> root_causes;            // feature indices
    std::map<std::string, int> scores_by_name;
};

// Reads the JSON-Lines report stream back; feature names must follow the
// canonical `signal_<k>` convention to recover indices.
std::vector<ParsedReport> read_reports_jsonl(std::istream& in);
std::vector<ParsedReport> read_reports_jsonl_file(const std::string& path);

}  // namespace rca
