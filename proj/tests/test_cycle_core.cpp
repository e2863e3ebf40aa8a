#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "rca/cycles.hpp"
#include "rca/log_io.hpp"
#include "rca/rng.hpp"

#include <cmath>
#include <set>
#include <sstream>

using namespace rca;

namespace {

// The cut-out rows from a manufacturing dataset (5 signals, 2 cycles).
const char* kCutoutCsv =
    "timestamp,signal_1,signal_2,signal_3,signal_4,signal_5,cycle,state\n"
    "19:04:15.0684,0,1,1,1,1,1,1\n"
    "19:04:15.9605,0,1,1,1,1,1,1\n"
    "19:04:42.8403,1,0,0,0,0,1,2\n"
    "19:04:43.2353,1,0,0,0,0,1,2\n"
    "19:05:13.2559,1,0,0,1,1,1,3\n"
    "19:05:17.1166,1,0,0,0,1,1,4\n"
    "19:05:50.6370,0,1,0,0,1,1,5\n"
    "19:06:07.4969,1,0,0,1,0,1,6\n"
    "19:06:27.6087,0,0,0,0,1,1,7\n"
    "19:06:53.4058,0,0,1,1,1,2,1\n"
    "19:09:14.7522,0,1,1,1,0,2,2\n";

SignalLog parse_string(const std::string& text) {
    std::istringstream in(text);
    return parse_log(in);
}

CycleSeries tiny_cycle(int id, int rows, int d, std::uint64_t seed) {
    CycleSeries cs;
    cs.cycle_id = id;
    cs.matrix.resize(rows, d);
    Rng rng(seed);
    for (int r = 0; r < rows; ++r)
        for (int f = 0; f < d; ++f) cs.matrix(r, f) = uniform01(rng) < 0.5 ? 0.0 : 1.0;
    cs.states.assign(static_cast<std::size_t>(rows), 1);
    cs.duration_seconds = 100.0;
    return cs;
}

}  // namespace

TEST_CASE("parse_log reads the dataset cut-out") {
    SignalLog log = parse_string(kCutoutCsv);
    CHECK(log.rows.size() == 11);
    CHECK(log.dims() == 5);
    CHECK(log.feature_names.front() == "signal_1");
    CHECK(log.rows.front().cycle == 1);
    CHECK(log.rows.back().cycle == 2);
    CHECK(log.rows.back().state == 2);
}

TEST_CASE("parse_log accepts an empty body") {
    SignalLog log = parse_string("timestamp,s_a,s_b,cycle,state\n");
    CHECK(log.rows.empty());
    CHECK(log.dims() == 2);
    CHECK(log.feature_names == std::vector<std::string>{"s_a", "s_b"});
}

TEST_CASE("parse_log rejects contract violations with the row index") {
    SUBCASE("non-binary signal") {
        const std::string text =
            "timestamp,s1,cycle,state\n"
            "10:00:00.0,0,1,1\n"
            "10:00:01.0,2,1,1\n";
        CHECK_THROWS_WITH_AS(parse_string(text),
                             doctest::Contains("row 2"), DataError);
    }
    SUBCASE("malformed timestamp") {
        const std::string text =
            "timestamp,s1,cycle,state\n"
            "not-a-time,0,1,1\n";
        CHECK_THROWS_WITH_AS(parse_string(text), doctest::Contains("timestamp"), DataError);
    }
    SUBCASE("decreasing cycle number") {
        const std::string text =
            "timestamp,s1,cycle,state\n"
            "10:00:00.0,0,2,1\n"
            "10:00:01.0,0,1,1\n";
        CHECK_THROWS_WITH_AS(parse_string(text), doctest::Contains("cycle number decreases"),
                             DataError);
    }
    SUBCASE("decreasing timestamp") {
        const std::string text =
            "timestamp,s1,cycle,state\n"
            "10:00:01.0,0,1,1\n"
            "10:00:00.0,0,1,1\n";
        CHECK_THROWS_AS(parse_string(text), DataError);
    }
    SUBCASE("decreasing state within a cycle") {
        const std::string text =
            "timestamp,s1,cycle,state\n"
            "10:00:00.0,0,1,2\n"
            "10:00:01.0,0,1,1\n";
        CHECK_THROWS_AS(parse_string(text), DataError);
    }
}

TEST_CASE("timestamps parse in both supported formats") {
    CHECK(parse_timestamp_us("00:00:00.000001") == 1);
    CHECK(parse_timestamp_us("01:00:00") == 3'600'000'000LL);
    CHECK(parse_timestamp_us("19:04:15.0684") ==
          (19LL * 3600 + 4 * 60 + 15) * 1'000'000 + 68'400);
    const std::int64_t iso = parse_timestamp_us("2024-01-02T00:00:00.500000");
    CHECK(iso == (19'724LL * 86'400) * 1'000'000 + 500'000);
    CHECK(format_timestamp_us(iso) == "2024-01-02T00:00:00.500000");
    CHECK_THROWS_AS(parse_timestamp_us("25:00:00"), DataError);
}

TEST_CASE("segment_cycles splits the cut-out into its two cycles") {
    auto cycles = segment_cycles(parse_string(kCutoutCsv));
    REQUIRE(cycles.size() == 2);
    CHECK(cycles[0].cycle_id == 1);
    CHECK(cycles[0].rows() == 9);
    CHECK(cycles[1].rows() == 2);
    CHECK(cycles[0].duration_seconds == doctest::Approx(132.5403));
    CHECK(cycles[1].duration_seconds == doctest::Approx(141.3464));
    CHECK(cycles[0].states.front() == 1);
    CHECK(cycles[0].states.back() == 7);
}

TEST_CASE("segment_cycles handles a single-row log") {
    auto cycles = segment_cycles(parse_string("timestamp,s1,cycle,state\n10:00:00.0,1,1,1\n"));
    REQUIRE(cycles.size() == 1);
    CHECK(cycles[0].rows() == 1);
    CHECK(cycles[0].duration_seconds == 0.0);
}

TEST_CASE("segment_cycles is a partition of the log rows") {
    std::ostringstream text;
    text << "timestamp,s1,s2,cycle,state\n";
    Rng rng(7);
    int second = 0;
    for (int c = 1; c <= 3; ++c)
        for (int r = 0; r < 10; ++r)
            text << "10:00:" << (second < 10 ? "0" : "") << second++ << ".0," << (r % 2) << ','
                 << (r % 3 == 0 ? 1 : 0) << ',' << c << ",1\n";
    SignalLog log = parse_string(text.str());
    auto cycles = segment_cycles(log);
    REQUIRE(cycles.size() == 3);
    std::size_t at = 0;
    for (const auto& cs : cycles) {
        CHECK(cs.rows() == 10);
        for (Eigen::Index r = 0; r < cs.rows(); ++r, ++at)
            for (int f = 0; f < log.dims(); ++f)
                CHECK(cs.matrix(r, f) == static_cast<double>(log.rows[at].signals[f]));
    }
    CHECK(at == log.rows.size());
}

TEST_CASE("flag_productivity applies the duration threshold") {
    std::vector<CycleSeries> cycles(2);
    cycles[0].cycle_id = 1;
    cycles[0].duration_seconds = 160.0;
    cycles[1].cycle_id = 2;
    cycles[1].duration_seconds = 140.0;
    auto flags = flag_productivity(cycles, DurationFlagPolicy{140.0, 1.1});
    CHECK(flags[0].flag == 1);  // 160 > 154
    CHECK(flags[1].flag == 0);
    CHECK(flags[0].basis == FlagBasis::DurationThreshold);
}

TEST_CASE("flag_productivity median fallback flags only the outlier") {
    const double durations[] = {94, 95, 93, 96, 94, 95, 93, 200};
    std::vector<CycleSeries> cycles;
    for (int i = 0; i < 8; ++i) {
        CycleSeries cs;
        cs.cycle_id = i + 1;
        cs.duration_seconds = durations[i];
        cycles.push_back(cs);
    }
    // median 94.5, MAD 1.0 -> threshold 97.5
    auto flags = flag_productivity(cycles, DurationFlagPolicy{});
    for (int i = 0; i < 7; ++i) CHECK(flags[i].flag == 0);
    CHECK(flags[7].flag == 1);
}

TEST_CASE("flag_productivity configuration errors") {
    std::vector<CycleSeries> cycles(3);
    for (int i = 0; i < 3; ++i) cycles[i].cycle_id = i + 1;
    CHECK_THROWS_AS(flag_productivity(cycles, DurationFlagPolicy{}), ConfigError);
    CHECK_THROWS_AS(flag_productivity(cycles, DurationFlagPolicy{-1.0, 1.1}), ConfigError);
}

TEST_CASE("flag_productivity passes external labels through verbatim") {
    std::vector<CycleSeries> cycles(3);
    for (int i = 0; i < 3; ++i) cycles[i].cycle_id = i + 1;
    std::map<int, int> labels{{1, 0}, {2, 1}, {3, 0}};
    auto flags = flag_productivity(cycles, labels);
    CHECK(flags[0].flag == 0);
    CHECK(flags[1].flag == 1);
    CHECK(flags[2].flag == 0);
    CHECK(flags[1].basis == FlagBasis::ExternalLabel);
    CHECK_THROWS_AS(flag_productivity(cycles, std::map<int, int>{{1, 0}}), DataError);
}

TEST_CASE("make_batches windows cycles with a trailing partial batch") {
    auto build = [&](int n) {
        std::vector<CycleSeries> cycles;
        std::vector<ProductivityFlag> flags;
        for (int i = 1; i <= n; ++i) {
            cycles.push_back(tiny_cycle(i, 4, 3, static_cast<std::uint64_t>(i)));
            flags.push_back({i, i % 2, FlagBasis::ExternalLabel});
        }
        return std::pair{cycles, flags};
    };
    SUBCASE("10 cycles, a=4 -> 4,4,2") {
        auto [cycles, flags] = build(10);
        auto batches = make_batches(cycles, flags, 4);
        REQUIRE(batches.size() == 3);
        CHECK(batches[0].cycles.size() == 4);
        CHECK(batches[1].cycles.size() == 4);
        CHECK(batches[2].cycles.size() == 2);
        CHECK(batches[1].start_cycle == 5);
        CHECK(batches[0].stacked.rows() == 16);
        CHECK(batches[0].labels_per_row.size() == 16);
        // row labels inherit the owning cycle's flag
        CHECK(batches[0].labels_per_row[0] == 1);
        CHECK(batches[0].labels_per_row[4] == 0);
    }
    SUBCASE("exactly one full window") {
        auto [cycles, flags] = build(4);
        auto batches = make_batches(cycles, flags, 4);
        REQUIRE(batches.size() == 1);
        CHECK(batches[0].start_cycle == 1);
    }
    SUBCASE("400 cycles, a=5 -> 80 batches covering every cycle once") {
        auto [cycles, flags] = build(400);
        auto batches = make_batches(cycles, flags, 5);
        CHECK(batches.size() == 80);
        std::size_t covered = 0;
        for (const auto& b : batches) covered += b.cycles.size();
        CHECK(covered == 400);
    }
}

TEST_CASE("select_top_fraction sizing and tie rules") {
    SUBCASE("d=26, 3.75% -> 1 index") {
        Vector scores = Vector::Random(26);
        CHECK(select_top_fraction(scores, 0.0375).size() == 1);
    }
    SUBCASE("d=83, 10% -> 8 indices") {
        Vector scores = Vector::Random(83);
        CHECK(select_top_fraction(scores, 0.10).size() == 8);
    }
    SUBCASE("ties break toward the lower index") {
        Vector scores(3);
        scores << 3, 3, 1;
        auto top = select_top_fraction(scores, 0.67);
        REQUIRE(top.size() == 2);
        CHECK(top[0] == 0);
        CHECK(top[1] == 1);
    }
}

TEST_CASE("select_top_fraction properties: size, uniqueness, rescale invariance") {
    Rng rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        const int d = 1 + static_cast<int>(uniform_index(rng, 40));
        const double frac = 0.01 + 0.99 * uniform01(rng);
        Vector scores(d);
        for (int i = 0; i < d; ++i) scores[i] = std::floor(uniform01(rng) * 8);
        auto top = select_top_fraction(scores, frac);
        const int expected = std::max(1, static_cast<int>(std::llround(frac * d)));
        CHECK(static_cast<int>(top.size()) == std::min(expected, d));
        std::set<int> unique(top.begin(), top.end());
        CHECK(unique.size() == top.size());
        for (int f : top) {
            CHECK(f >= 0);
            CHECK(f < d);
        }
        const double scale = 0.5 + 3.0 * uniform01(rng);
        CHECK(select_top_fraction(Vector(scale * scores), frac) == top);
    }
}

TEST_CASE("select_next_block returns the runner-up indices") {
    Vector scores(5);
    scores << 5, 1, 4, 3, 2;
    CHECK(select_next_block(scores, 1, 2) == std::vector<int>{2, 3});
    CHECK(select_next_block(scores, 4, 3) == std::vector<int>{1});  // clipped at d
}

TEST_CASE("log round-trips through write_log") {
    SignalLog log = parse_string(kCutoutCsv);
    std::ostringstream out;
    write_log(log, out);
    SignalLog again = parse_string(out.str());
    REQUIRE(again.rows.size() == log.rows.size());
    for (std::size_t i = 0; i < log.rows.size(); ++i) {
        CHECK(again.rows[i].timestamp_us == log.rows[i].timestamp_us);
        CHECK(again.rows[i].signals == log.rows[i].signals);
        CHECK(again.rows[i].cycle == log.rows[i].cycle);
        CHECK(again.rows[i].state == log.rows[i].state);
    }
}
