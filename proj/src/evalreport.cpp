#include "rca/evalreport.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

namespace rca {

ConfusionCounts confusion(const std::vector<ParsedReport>& predictions,
                          const GroundTruth& truth) {
    std::map<int, const CycleTruth*> by_cycle;
    for (const auto& ct : truth.cycles) by_cycle[ct.cycle_id] = &ct;

    std::vector<int> unknown;
    std::map<int, std::set<int>> predicted;
    for (const auto& report : predictions) {
        if (!by_cycle.count(report.cycle_id)) {
            unknown.push_back(report.cycle_id);
            continue;
        }
        predicted[report.cycle_id].insert(report.root_causes.begin(),
                                          report.root_causes.end());
    }
    if (!unknown.empty()) {
        std::ostringstream msg;
        msg << "reports reference cycles missing from the ground truth:";
        for (int c : unknown) msg << ' ' << c;
        throw DataError(msg.str());
    }

    ConfusionCounts counts;
    for (const auto& ct : truth.cycles) {
        if (ct.flag != 1) continue;
        const std::set<int> truth_set(ct.root_cause_features.begin(),
                                      ct.root_cause_features.end());
        auto it = predicted.find(ct.cycle_id);
        const std::set<int> pred_set =
            it != predicted.end() ? it->second : std::set<int>{};
        for (int f : pred_set) counts.tp += truth_set.count(f) ? 1 : 0;
        for (int f : pred_set) counts.fp += truth_set.count(f) ? 0 : 1;
        for (int f : truth_set) counts.fn += pred_set.count(f) ? 0 : 1;
    }
    return counts;
}

MetricSet metrics(const ConfusionCounts& counts) {
    MetricSet m;
    const double tp = static_cast<double>(counts.tp);
    if (counts.tp + counts.fp > 0) m.precision = tp / static_cast<double>(counts.tp + counts.fp);
    if (counts.tp + counts.fn > 0) m.recall = tp / static_cast<double>(counts.tp + counts.fn);
    if (m.precision + m.recall > 0)
        m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
    return m;
}

double round3(double value) { return std::round(value * 1000.0) / 1000.0; }

void write_metrics_json(const std::string& model, const MetricSet& m, const ConfusionCounts& c,
                        std::ostream& out) {
    nlohmann::ordered_json doc;
    doc["model"] = model;
    doc["precision"] = round3(m.precision);
    doc["recall"] = round3(m.recall);
    doc["f1"] = round3(m.f1);
    doc["tp"] = c.tp;
    doc["fp"] = c.fp;
    doc["fn"] = c.fn;
    out << doc.dump(2) << '\n';
}

std::vector<ScatterPoint> scatter_points(const std::vector<RootCauseReport>& reports,
                                         const std::vector<std::string>& feature_names) {
    std::vector<ScatterPoint> points;
    for (const auto& report : reports) {
        for (const auto& [f, s] : report.scores) {
            if (s < 2) continue;
            const std::string name = f < static_cast<int>(feature_names.size())
                                         ? feature_names[static_cast<std::size_t>(f)]
                                         : "signal_" + std::to_string(f + 1);
            points.push_back({report.cycle_id, name, s});
        }
    }
    return points;
}

void emit_score_scatter_csv(const std::vector<ScatterPoint>& points, std::ostream& out) {
    out << "cycle,feature_name,score\n";
    for (const auto& p : points) out << p.cycle_id << ',' << p.feature << ',' << p.score << '\n';
}

std::vector<ScatterPoint> parse_score_scatter_csv(std::istream& in) {
    std::vector<ScatterPoint> points;
    std::string line;
    if (!std::getline(in, line) || line != "cycle,feature_name,score")
        throw DataError("scatter CSV must start with 'cycle,feature_name,score'");
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        ++row;
        const auto c1 = line.find(',');
        const auto c2 = line.rfind(',');
        if (c1 == std::string::npos || c2 == c1)
            throw DataError("malformed scatter row", row);
        ScatterPoint p;
        p.cycle_id = std::stoi(line.substr(0, c1));
        p.feature = line.substr(c1 + 1, c2 - c1 - 1);
        p.score = std::stoi(line.substr(c2 + 1));
        points.push_back(std::move(p));
    }
    return points;
}

void emit_score_scatter_svg(const std::vector<ScatterPoint>& points, std::ostream& out) {
    const int width = 900, height = 360;
    const int margin_left = 60, margin_bottom = 40, margin_top = 20, margin_right = 180;

    int max_cycle = 1;
    std::set<std::string> features;
    for (const auto& p : points) {
        max_cycle = std::max(max_cycle, p.cycle_id);
        features.insert(p.feature);
    }
    // Marker size encodes how many features share the same (cycle, score).
    std::map<std::pair<int, int>, int> multiplicity;
    for (const auto& p : points) ++multiplicity[{p.cycle_id, p.score}];

    const char* palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                             "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
    std::map<std::string, std::string> color;
    int ci = 0;
    for (const auto& f : features) color[f] = palette[ci++ % 10];

    auto x_of = [&](int cycle) {
        return margin_left +
               (width - margin_left - margin_right) * static_cast<double>(cycle) / max_cycle;
    };
    auto y_of = [&](int score) {
        return height - margin_bottom -
               (height - margin_top - margin_bottom) * (score - 1.5) / 3.0;
    };

    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
    out << "  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "  <line x1=\"" << margin_left << "\" y1=\"" << height - margin_bottom << "\" x2=\""
        << width - margin_right << "\" y2=\"" << height - margin_bottom
        << "\" stroke=\"black\"/>\n";
    out << "  <line x1=\"" << margin_left << "\" y1=\"" << margin_top << "\" x2=\"" << margin_left
        << "\" y2=\"" << height - margin_bottom << "\" stroke=\"black\"/>\n";
    out << "  <text x=\"" << (width - margin_right + margin_left) / 2 << "\" y=\"" << height - 8
        << "\" text-anchor=\"middle\" font-size=\"13\">cycle</text>\n";
    out << "  <text x=\"16\" y=\"" << (height - margin_bottom + margin_top) / 2
        << "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 16 "
        << (height - margin_bottom + margin_top) / 2 << ")\">root cause score</text>\n";
    for (int s = 2; s <= 4; ++s)
        out << "  <text x=\"" << margin_left - 10 << "\" y=\"" << y_of(s) + 4
            << "\" text-anchor=\"end\" font-size=\"12\">" << s << "</text>\n";

    for (const auto& p : points) {
        const int mult = multiplicity[{p.cycle_id, p.score}];
        const double radius = 3.0 + 1.5 * (mult - 1);
        out << "  <circle cx=\"" << x_of(p.cycle_id) << "\" cy=\"" << y_of(p.score) << "\" r=\""
            << radius << "\" fill=\"" << color[p.feature] << "\" fill-opacity=\"0.7\"/>\n";
    }

    int row = 0;
    for (const auto& f : features) {
        const double y = margin_top + 14 + 16 * row++;
        out << "  <circle cx=\"" << width - margin_right + 16 << "\" cy=\"" << y - 4
            << "\" r=\"4\" fill=\"" << color[f] << "\"/>\n";
        out << "  <text x=\"" << width - margin_right + 26 << "\" y=\"" << y
            << "\" font-size=\"12\">" << f << "</text>\n";
    }
    out << "</svg>\n";
}

}  // namespace rca
