#pragma once

#include "rca/types.hpp"

#include <optional>
#include <vector>

namespace rca {

struct PcaResult {
    int cycle_id = 0;
    Matrix components;               // columns are orthonormal loading vectors
    Vector eigenvalues;              // nonincreasing, >= 0
    Vector explained_variance_ratio;
    Vector feature_scores;           // variance-weighted |loading| blend
    int components_kept = 0;         // enough to cover 90% variance, min 1
};

// Eigendecomposition of the cycle's d x d sample covariance. Needs n >= 2.
// pca_components: nullopt keeps components covering 90% of variance,
// otherwise exactly the requested count.
PcaResult pca_cycle(const CycleSeries& cycle, std::optional<int> pca_components = std::nullopt);

struct GbdtParams {
    int num_rounds = 50;
    int max_depth = 4;
    double learning_rate = 0.3;
    double reg_lambda = 1.0;
    double min_child_hessian = 1.0;
};

struct TreeNode {
    int feature = -1;        // -1 for leaves
    double threshold = 0.5;
    double leaf_weight = 0.0;
    int left = -1;           // child indices into the tree's node array
    int right = -1;
};

struct GbdtModel {
    std::vector<std::vector<TreeNode>> trees;
    GbdtParams params;
    double base_margin = 0.0;           // prior log-odds of the training labels
    Vector gain_importance;             // normalized to sum 1 when any split exists
    Vector cover_importance;            // hessian mass per feature (debug output)
    Vector frequency_importance;        // split counts per feature (debug output)
    std::vector<double> train_logloss;  // per completed round
    bool degenerate = false;            // single-class training data

    double predict_margin(const Eigen::Ref<const Eigen::RowVectorXd>& row) const;
    Vector predict_margins(const Matrix& rows) const;
};

// Second-order boosting with logistic loss on per-row labels. A single-class
// batch yields a flagged constant model instead of an error.
GbdtModel gbdt_train(const Matrix& rows, const std::vector<int>& labels,
                     const GbdtParams& params);
GbdtModel gbdt_train(const CycleBatch& batch, const GbdtParams& params);

double logloss(const Vector& margins, const std::vector<int>& labels);

// I_3: top PCA structural features intersected with top GBDT importance.
std::vector<int> structural_evidence(const PcaResult& pca, const GbdtModel& model,
                                     const SelectionPolicy& policy);

}  // namespace rca
