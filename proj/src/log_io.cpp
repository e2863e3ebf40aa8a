#include "rca/log_io.hpp"

#include <nlohmann/json.hpp>

#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace rca {

namespace {

constexpr std::int64_t kUsPerSecond = 1'000'000;
constexpr std::int64_t kUsPerDay = 86'400 * kUsPerSecond;

// Howard Hinnant's civil date algorithms.
std::int64_t days_from_civil(int y, int m, int d) {
    y -= m <= 2;
    const int era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153u * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return static_cast<std::int64_t>(era) * 146097 + static_cast<int>(doe) - 719468;
}

void civil_from_days(std::int64_t z, int& y, int& m, int& d) {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const std::int64_t yr = static_cast<std::int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    d = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
    m = static_cast<int>(mp + (mp < 10 ? 3 : -9));
    y = static_cast<int>(yr + (m <= 2));
}

bool parse_int_field(const std::string& s, std::size_t begin, std::size_t len, int& out) {
    if (begin + len > s.size()) return false;
    out = 0;
    for (std::size_t i = begin; i < begin + len; ++i) {
        if (s[i] < '0' || s[i] > '9') return false;
        out = out * 10 + (s[i] - '0');
    }
    return true;
}

// Parses HH:MM:SS[.ffffff] starting at `pos`; returns microseconds within the
// day or -1 on malformed input.
std::int64_t parse_time_of_day(const std::string& s, std::size_t pos) {
    int hh = 0, mm = 0, ss = 0;
    if (!parse_int_field(s, pos, 2, hh) || !parse_int_field(s, pos + 3, 2, mm) ||
        !parse_int_field(s, pos + 6, 2, ss))
        return -1;
    if (s[pos + 2] != ':' || s[pos + 5] != ':') return -1;
    if (hh > 23 || mm > 59 || ss > 60) return -1;
    std::size_t end = pos + 8;
    std::int64_t frac_us = 0;
    if (end < s.size() && s[end] == '.') {
        ++end;
        int digits = 0;
        while (end < s.size() && s[end] >= '0' && s[end] <= '9' && digits < 6) {
            frac_us = frac_us * 10 + (s[end] - '0');
            ++end;
            ++digits;
        }
        if (digits == 0) return -1;
        for (; digits < 6; ++digits) frac_us *= 10;
    }
    if (end < s.size() && s[end] == 'Z') ++end;
    if (end != s.size()) return -1;
    return (static_cast<std::int64_t>(hh) * 3600 + mm * 60 + ss) * kUsPerSecond + frac_us;
}

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        std::size_t comma = line.find(',', start);
        if (comma == std::string::npos) {
            out.push_back(trim(line.substr(start)));
            break;
        }
        out.push_back(trim(line.substr(start, comma - start)));
        start = comma + 1;
    }
    return out;
}

}  // namespace

std::int64_t parse_timestamp_us(const std::string& text) {
    // ISO-8601 carries a date part: YYYY-MM-DD followed by 'T' or ' '.
    if (text.size() >= 10 && text[4] == '-' && text[7] == '-') {
        int y = 0, mo = 0, da = 0;
        if (!parse_int_field(text, 0, 4, y) || !parse_int_field(text, 5, 2, mo) ||
            !parse_int_field(text, 8, 2, da))
            throw DataError("malformed timestamp '" + text + "'");
        if (text.size() < 19 || (text[10] != 'T' && text[10] != ' '))
            throw DataError("malformed timestamp '" + text + "'");
        if (mo < 1 || mo > 12 || da < 1 || da > 31)
            throw DataError("malformed timestamp '" + text + "'");
        std::int64_t tod = parse_time_of_day(text, 11);
        if (tod < 0) throw DataError("malformed timestamp '" + text + "'");
        return days_from_civil(y, mo, da) * kUsPerDay + tod;
    }
    std::int64_t tod = parse_time_of_day(text, 0);
    if (tod < 0) throw DataError("malformed timestamp '" + text + "'");
    return tod;
}

std::string format_timestamp_us(std::int64_t us) {
    std::int64_t day = us >= 0 ? us / kUsPerDay : (us - (kUsPerDay - 1)) / kUsPerDay;
    std::int64_t tod = us - day * kUsPerDay;
    int y, m, d;
    civil_from_days(day, y, m, d);
    const int hh = static_cast<int>(tod / (3600 * kUsPerSecond));
    tod -= static_cast<std::int64_t>(hh) * 3600 * kUsPerSecond;
    const int mm = static_cast<int>(tod / (60 * kUsPerSecond));
    tod -= static_cast<std::int64_t>(mm) * 60 * kUsPerSecond;
    const int ss = static_cast<int>(tod / kUsPerSecond);
    const int frac = static_cast<int>(tod - static_cast<std::int64_t>(ss) * kUsPerSecond);
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02d.%06d", y, m, d, hh, mm, ss,
                  frac);
    return buf;
}

SignalLog parse_log(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw DataError("empty input: missing header row");
    auto header = split_csv(line);
    if (header.size() < 4)
        throw DataError("header must name timestamp, at least one signal, cycle and state");
    if (header.front() != "timestamp")
        throw DataError("header must start with 'timestamp', got '" + header.front() + "'");
    if (header[header.size() - 2] != "cycle" || header.back() != "state")
        throw DataError("header must end with 'cycle,state'");

    SignalLog log;
    log.feature_names.assign(header.begin() + 1, header.end() - 2);
    const std::size_t d = log.feature_names.size();

    std::size_t row_index = 0;
    std::int64_t prev_ts = 0;
    int prev_cycle = 0;
    int prev_state = 0;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        ++row_index;
        auto cells = split_csv(line);
        if (cells.size() != d + 3)
            throw DataError("expected " + std::to_string(d + 3) + " columns, got " +
                                std::to_string(cells.size()),
                            row_index);
        LogRow row;
        try {
            row.timestamp_us = parse_timestamp_us(cells[0]);
        } catch (const DataError& e) {
            throw DataError(e.what(), row_index);
        }
        row.signals.resize(d);
        for (std::size_t f = 0; f < d; ++f) {
            const std::string& v = cells[1 + f];
            if (v == "0")
                row.signals[f] = 0;
            else if (v == "1")
                row.signals[f] = 1;
            else
                throw DataError("non-binary signal value '" + v + "' in column '" +
                                    log.feature_names[f] + "'",
                                row_index);
        }
        auto parse_positive = [&](const std::string& v, const char* what) {
            int value = 0;
            auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), value);
            if (ec != std::errc() || p != v.data() + v.size() || value <= 0)
                throw DataError(std::string("invalid ") + what + " '" + v + "'", row_index);
            return value;
        };
        row.cycle = parse_positive(cells[d + 1], "cycle number");
        row.state = parse_positive(cells[d + 2], "state number");

        if (row_index > 1) {
            if (row.timestamp_us < prev_ts)
                throw DataError("timestamp decreases", row_index);
            if (row.cycle < prev_cycle)
                throw DataError("cycle number decreases from " + std::to_string(prev_cycle) +
                                    " to " + std::to_string(row.cycle),
                                row_index);
            if (row.cycle == prev_cycle && row.state < prev_state)
                throw DataError("state number decreases within cycle " +
                                    std::to_string(row.cycle),
                                row_index);
        }
        prev_ts = row.timestamp_us;
        prev_cycle = row.cycle;
        prev_state = row.state;
        log.rows.push_back(std::move(row));
    }
    return log;
}

SignalLog parse_log_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open log file '" + path + "'");
    return parse_log(in);
}

void write_log(const SignalLog& log, std::ostream& out) {
    out << "timestamp";
    for (const auto& name : log.feature_names) out << ',' << name;
    out << ",cycle,state\n";
    for (const auto& row : log.rows) {
        out << format_timestamp_us(row.timestamp_us);
        for (auto s : row.signals) out << ',' << static_cast<int>(s);
        out << ',' << row.cycle << ',' << row.state << '\n';
    }
}

void write_log_file(const SignalLog& log, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write log file '" + path + "'");
    write_log(log, out);
}

std::map<int, int> parse_labels(std::istream& in) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("invalid labels JSON: ") + e.what());
    }
    if (!doc.is_array()) throw DataError("labels JSON must be an array of {cycle, flag}");
    std::map<int, int> labels;
    for (const auto& item : doc) {
        if (!item.is_object() || !item.contains("cycle") || !item.contains("flag"))
            throw DataError("labels entries must be {cycle, flag}");
        const int flag = item["flag"].get<int>();
        if (flag != 0 && flag != 1) throw DataError("label flag must be 0 or 1");
        labels[item["cycle"].get<int>()] = flag;
    }
    return labels;
}

std::map<int, int> parse_labels_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open labels file '" + path + "'");
    return parse_labels(in);
}

std::string to_string(AnomalyKind kind) {
    switch (kind) {
        case AnomalyKind::StuckSignal: return "stuck-signal";
        case AnomalyKind::DelayedTransition: return "delayed-transition";
        case AnomalyKind::DroppedSignal: return "dropped-signal";
        case AnomalyKind::None: break;
    }
    return "none";
}

AnomalyKind anomaly_kind_from_string(const std::string& s) {
    if (s == "stuck-signal") return AnomalyKind::StuckSignal;
    if (s == "delayed-transition") return AnomalyKind::DelayedTransition;
    if (s == "dropped-signal") return AnomalyKind::DroppedSignal;
    if (s == "none" || s.empty()) return AnomalyKind::None;
    throw DataError("unknown anomaly kind '" + s + "'");
}

}  // namespace rca
