#pragma once

#include "rca/ensemble.hpp"
#include "rca/types.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace rca {

// (cycle, feature) pair counts over flagged cycles.
struct ConfusionCounts {
    long tp = 0;
    long fp = 0;
    long fn = 0;
};

struct MetricSet {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

// Over cycles the truth flags P=1: tp counts predicted-and-true pairs, fp
// predicted-only, fn true-only. A flagged cycle without a report predicts
// the empty set; reports for cycles absent from the truth are an error.
ConfusionCounts confusion(const std::vector<ParsedReport>& predictions,
                          const GroundTruth& truth);

// precision = tp/(tp+fp), recall = tp/(tp+fn), f1 = 2PR/(P+R); zero
// denominators yield 0 by convention.
MetricSet metrics(const ConfusionCounts& counts);

// Half-away-from-zero rounding to 3 decimals, the Table-display convention.
double round3(double value);

void write_metrics_json(const std::string& model, const MetricSet& m, const ConfusionCounts& c,
                        std::ostream& out);

// Scatter of per-feature root-cause scores over cycles; rows carry only
// scores >= 2. The SVG mirrors the CSV with marker area scaled by how many
// features share a (cycle, score) point.
struct ScatterPoint {
    int cycle_id = 0;
    std::string feature;
    int score = 0;
};

std::vector<ScatterPoint> scatter_points(const std::vector<RootCauseReport>& reports,
                                         const std::vector<std::string>& feature_names);

void emit_score_scatter_csv(const std::vector<ScatterPoint>& points, std::ostream& out);
void emit_score_scatter_svg(const std::vector<ScatterPoint>& points, std::ostream& out);
std::vector<ScatterPoint> parse_score_scatter_csv(std::istream& in);

}  // namespace rca
