#pragma once

#include "rca/types.hpp"

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>

namespace rca {

// Accepts `HH:MM:SS.ffff` (Table-1 style, day-local) or ISO-8601
// `YYYY-MM-DD[T ]HH:MM:SS[.ffffff][Z]`. Returns microseconds since the civil
// epoch 1970-01-01 (day-local stamps count from day 0).
std::int64_t parse_timestamp_us(const std::string& text);

// ISO-8601 with microsecond precision; inverse of parse_timestamp_us for
// ISO inputs.
std::string format_timestamp_us(std::int64_t us);

// Streaming single-pass parse of the canonical CSV
// `timestamp,<signal names...>,cycle,state`. Signal count is inferred from
// the header. Throws DataError with the offending 1-based data row index.
SignalLog parse_log(std::istream& in);
SignalLog parse_log_file(const std::string& path);

void write_log(const SignalLog& log, std::ostream& out);
void write_log_file(const SignalLog& log, const std::string& path);

// External labels: JSON array of {"cycle": int, "flag": 0|1}.
std::map<int, int> parse_labels(std::istream& in);
std::map<int, int> parse_labels_file(const std::string& path);

}  // namespace rca
