#include "rca/cycles.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace rca {

namespace {

double median_of(std::vector<double> v) {
    const std::size_t n = v.size();
    std::sort(v.begin(), v.end());
    if (n % 2 == 1) return v[n / 2];
    return 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::vector<int> ranked_indices(const Vector& scores) {
    std::vector<int> idx(static_cast<std::size_t>(scores.size()));
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    });
    return idx;
}

}  // namespace

std::vector<CycleSeries> segment_cycles(const SignalLog& log) {
    std::vector<CycleSeries> cycles;
    const int d = log.dims();
    std::size_t i = 0;
    while (i < log.rows.size()) {
        std::size_t j = i;
        while (j < log.rows.size() && log.rows[j].cycle == log.rows[i].cycle) ++j;
        const std::size_t n = j - i;
        CycleSeries cs;
        cs.cycle_id = log.rows[i].cycle;
        cs.matrix.resize(static_cast<Eigen::Index>(n), d);
        cs.states.resize(n);
        for (std::size_t r = 0; r < n; ++r) {
            const LogRow& row = log.rows[i + r];
            for (int f = 0; f < d; ++f)
                cs.matrix(static_cast<Eigen::Index>(r), f) = row.signals[f];
            cs.states[r] = row.state;
        }
        cs.duration_seconds =
            static_cast<double>(log.rows[j - 1].timestamp_us - log.rows[i].timestamp_us) / 1e6;
        cycles.push_back(std::move(cs));
        i = j;
    }
    return cycles;
}

std::vector<ProductivityFlag> flag_productivity(const std::vector<CycleSeries>& cycles,
                                                const DurationFlagPolicy& policy) {
    double threshold = 0.0;
    if (policy.ideal_cycle_seconds) {
        if (*policy.ideal_cycle_seconds <= 0.0)
            throw ConfigError("ideal_cycle_seconds must be positive");
        threshold = policy.factor * *policy.ideal_cycle_seconds;
    } else {
        if (cycles.size() < 8)
            throw ConfigError("median+3*MAD flagging needs at least 8 cycles; "
                              "provide ideal_cycle_seconds or external labels");
        std::vector<double> durations;
        durations.reserve(cycles.size());
        for (const auto& c : cycles) durations.push_back(c.duration_seconds);
        const double med = median_of(durations);
        std::vector<double> dev;
        dev.reserve(durations.size());
        for (double x : durations) dev.push_back(std::abs(x - med));
        threshold = med + 3.0 * median_of(std::move(dev));
    }
    std::vector<ProductivityFlag> flags;
    flags.reserve(cycles.size());
    for (const auto& c : cycles)
        flags.push_back({c.cycle_id, c.duration_seconds > threshold ? 1 : 0,
                         FlagBasis::DurationThreshold});
    return flags;
}

std::vector<ProductivityFlag> flag_productivity(const std::vector<CycleSeries>& cycles,
                                                const std::map<int, int>& labels) {
    std::vector<ProductivityFlag> flags;
    flags.reserve(cycles.size());
    for (const auto& c : cycles) {
        auto it = labels.find(c.cycle_id);
        if (it == labels.end())
            throw DataError("no external label for cycle " + std::to_string(c.cycle_id));
        flags.push_back({c.cycle_id, it->second, FlagBasis::ExternalLabel});
    }
    return flags;
}

CycleBatch assemble_batch(const std::vector<CycleSeries>& cycles,
                          const std::vector<int>& flags) {
    CycleBatch batch;
    batch.start_cycle = cycles.empty() ? 0 : cycles.front().cycle_id;
    batch.cycles = cycles;
    Eigen::Index total = 0;
    for (const auto& c : cycles) total += c.rows();
    batch.stacked.resize(total, cycles.empty() ? 0 : cycles.front().dims());
    batch.labels_per_row.reserve(static_cast<std::size_t>(total));
    Eigen::Index at = 0;
    for (std::size_t i = 0; i < cycles.size(); ++i) {
        batch.stacked.middleRows(at, cycles[i].rows()) = cycles[i].matrix;
        at += cycles[i].rows();
        batch.labels_per_row.insert(batch.labels_per_row.end(),
                                    static_cast<std::size_t>(cycles[i].rows()), flags[i]);
    }
    return batch;
}

std::vector<CycleBatch> make_batches(const std::vector<CycleSeries>& cycles,
                                     const std::vector<ProductivityFlag>& flags, int a) {
    if (a < 1) throw ConfigError("batch size a must be >= 1");
    if (flags.size() != cycles.size())
        throw DataError("flags must cover every cycle exactly once");
    std::vector<CycleBatch> batches;
    for (std::size_t i = 0; i < cycles.size(); i += static_cast<std::size_t>(a)) {
        const std::size_t end = std::min(cycles.size(), i + static_cast<std::size_t>(a));
        std::vector<CycleSeries> window(cycles.begin() + static_cast<std::ptrdiff_t>(i),
                                        cycles.begin() + static_cast<std::ptrdiff_t>(end));
        std::vector<int> window_flags;
        for (std::size_t j = i; j < end; ++j) window_flags.push_back(flags[j].flag);
        batches.push_back(assemble_batch(window, window_flags));
    }
    return batches;
}

std::vector<int> select_top_fraction(const Vector& scores, double frac) {
    const int d = static_cast<int>(scores.size());
    if (d < 1) throw ConfigError("select_top_fraction needs at least one score");
    if (!(frac > 0.0) || frac > 1.0)
        throw ConfigError("selection fraction must lie in (0, 1]");
    const int k = std::max(1, static_cast<int>(std::llround(frac * d)));
    auto idx = ranked_indices(scores);
    idx.resize(static_cast<std::size_t>(std::min(k, d)));
    return idx;
}

std::vector<int> select_next_block(const Vector& scores, int skip, int count) {
    auto idx = ranked_indices(scores);
    std::vector<int> out;
    for (int i = skip; i < static_cast<int>(idx.size()) && static_cast<int>(out.size()) < count;
         ++i)
        out.push_back(idx[static_cast<std::size_t>(i)]);
    return out;
}

}  // namespace rca
