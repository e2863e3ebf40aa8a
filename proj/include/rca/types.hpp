#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace rca {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Raised when input data violates the log contract (bad timestamp, non-binary
// signal, decreasing cycle number, ...). `row` is the 1-based data row index,
// header excluded; 0 when the offence is not tied to a row.
class DataError : public std::runtime_error {
public:
    DataError(std::string message, std::size_t row = 0)
        : std::runtime_error(row > 0 ? "row " + std::to_string(row) + ": " + std::move(message)
                                     : std::move(message)),
          row_(row) {}
    std::size_t row() const { return row_; }

private:
    std::size_t row_;
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct LogRow {
    std::int64_t timestamp_us = 0;   // microseconds since an arbitrary epoch
    std::vector<std::uint8_t> signals;
    int cycle = 0;
    int state = 0;
};

// Validated, ordered PLC/sensor log. Immutable after construction.
struct SignalLog {
    std::vector<LogRow> rows;
    std::vector<std::string> feature_names;

    int dims() const { return static_cast<int>(feature_names.size()); }
};

// One production cycle: n timestamped rows over d binary signals.
struct CycleSeries {
    int cycle_id = 0;
    Matrix matrix;                    // n x d, entries in {0,1}
    std::vector<int> states;          // length n
    double duration_seconds = 0.0;    // last - first timestamp of the cycle

    Eigen::Index rows() const { return matrix.rows(); }
    Eigen::Index dims() const { return matrix.cols(); }
};

// Consecutive cycles stacked row-wise; the unit the models train on.
struct CycleBatch {
    int start_cycle = 0;
    std::vector<CycleSeries> cycles;
    Matrix stacked;                   // (sum n_i) x d
    std::vector<int> labels_per_row;  // productivity flag of the owning cycle
};

enum class FlagBasis { DurationThreshold, ExternalLabel };

struct ProductivityFlag {
    int cycle_id = 0;
    int flag = 0;  // P in {0,1}
    FlagBasis basis = FlagBasis::DurationThreshold;
};

// Top-fraction thresholds for the four evidence sets.
struct SelectionPolicy {
    double frac_i1 = 0.0375;
    double frac_i2 = 0.065;
    double frac_pca = 0.075;
    double frac_xgb = 0.10;
};

enum class AnomalyKind { None, StuckSignal, DelayedTransition, DroppedSignal };

std::string to_string(AnomalyKind kind);
AnomalyKind anomaly_kind_from_string(const std::string& s);

struct CycleTruth {
    int cycle_id = 0;
    int flag = 0;
    std::vector<int> root_cause_features;  // empty iff flag == 0
    AnomalyKind anomaly_kind = AnomalyKind::None;
};

struct GroundTruth {
    std::vector<CycleTruth> cycles;
};

}  // namespace rca
