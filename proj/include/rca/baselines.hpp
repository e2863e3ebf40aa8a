#pragma once

#include "rca/rng.hpp"
#include "rca/types.hpp"

#include <vector>

namespace rca {

struct IsolationNode {
    int feature = -1;       // -1 for leaves
    double threshold = 0.0;
    int size = 0;           // training rows that reached this node
    int left = -1;
    int right = -1;
};

struct IsolationForestModel {
    std::vector<std::vector<IsolationNode>> trees;
    int subsample = 256;
    double contamination = 0.1;
    bool trained = false;
};

struct IsolationForestParams {
    int num_trees = 100;
    int subsample = 256;
    double contamination = 0.1;
};

IsolationForestModel iforest_train(const Matrix& rows, const IsolationForestParams& params,
                                   std::uint64_t seed);

// Anomaly score in (0,1); higher is more isolated.
double iforest_score(const IsolationForestModel& model, const Eigen::Ref<const Eigen::RowVectorXd>& row);

// Rows in the top-contamination fraction are attributed: each split on a
// feature along their paths contributes its expected path-length reduction.
// The result is sized like I_1a united with I_1b for a fair comparison.
std::vector<int> iforest_root_causes(const IsolationForestModel& model, const CycleSeries& cycle,
                                     const SelectionPolicy& policy);

struct KnnModel {
    Matrix reference;  // rows from normal cycles
    int k = 10;
};

// Per cycle row: the k nearest reference rows under Hamming distance; a
// feature's attribution is |x_f - neighbor mean| averaged over rows.
Vector knn_feature_attribution(const KnnModel& model, const Matrix& cycle_rows);

std::vector<int> knn_root_causes(const KnnModel& model, const CycleSeries& cycle,
                                 const SelectionPolicy& policy);

}  // namespace rca
