#include "rca/structural.hpp"

#include "rca/cycles.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace rca {

PcaResult pca_cycle(const CycleSeries& cycle, std::optional<int> pca_components) {
    const Eigen::Index n = cycle.rows();
    const Eigen::Index d = cycle.dims();
    if (n < 2) throw DataError("pca_cycle needs at least 2 rows, cycle " +
                               std::to_string(cycle.cycle_id) + " has " + std::to_string(n));
    Matrix centered = cycle.matrix.rowwise() - cycle.matrix.colwise().mean();
    Matrix cov = centered.transpose() * centered / static_cast<double>(n - 1);

    Eigen::SelfAdjointEigenSolver<Matrix> solver(cov);
    if (solver.info() != Eigen::Success)
        throw DataError("eigendecomposition failed for cycle " + std::to_string(cycle.cycle_id));

    PcaResult result;
    result.cycle_id = cycle.cycle_id;
    result.eigenvalues = solver.eigenvalues().reverse().cwiseMax(0.0);
    result.components = solver.eigenvectors().rowwise().reverse();

    const double total = result.eigenvalues.sum();
    result.explained_variance_ratio =
        total > 0.0 ? Vector(result.eigenvalues / total) : Vector(Vector::Zero(d));

    if (pca_components) {
        result.components_kept = std::clamp(*pca_components, 1, static_cast<int>(d));
    } else {
        double covered = 0.0;
        result.components_kept = static_cast<int>(d);
        for (Eigen::Index j = 0; j < d; ++j) {
            covered += result.explained_variance_ratio[j];
            if (covered >= 0.9) {
                result.components_kept = static_cast<int>(j) + 1;
                break;
            }
        }
        if (total <= 0.0) result.components_kept = 1;
    }

    result.feature_scores = Vector::Zero(d);
    for (int j = 0; j < result.components_kept; ++j)
        result.feature_scores +=
            result.explained_variance_ratio[j] * result.components.col(j).cwiseAbs();
    return result;
}

namespace {

struct BuildContext {
    const Matrix& rows;
    const Vector& grad;
    const Vector& hess;
    const GbdtParams& params;
    std::vector<TreeNode>& nodes;
    Vector& gain_acc;
    Vector& cover_acc;
    Vector& freq_acc;
};

// Exact greedy split search; binary features need only the 0.5 threshold.
int build_node(BuildContext& ctx, const std::vector<int>& rows_here, int depth) {
    double g_sum = 0.0, h_sum = 0.0;
    for (int r : rows_here) {
        g_sum += ctx.grad[r];
        h_sum += ctx.hess[r];
    }
    const double lambda = ctx.params.reg_lambda;

    int best_feature = -1;
    double best_gain = 1e-12;
    const double parent_score = g_sum * g_sum / (h_sum + lambda);
    if (depth < ctx.params.max_depth) {
        for (int f = 0; f < static_cast<int>(ctx.rows.cols()); ++f) {
            double gl = 0.0, hl = 0.0;
            for (int r : rows_here) {
                if (ctx.rows(r, f) < 0.5) {
                    gl += ctx.grad[r];
                    hl += ctx.hess[r];
                }
            }
            const double gr = g_sum - gl;
            const double hr = h_sum - hl;
            if (hl < ctx.params.min_child_hessian || hr < ctx.params.min_child_hessian) continue;
            const double gain =
                0.5 * (gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - parent_score);
            if (gain > best_gain) {
                best_gain = gain;
                best_feature = f;
            }
        }
    }

    const int index = static_cast<int>(ctx.nodes.size());
    ctx.nodes.emplace_back();
    if (best_feature < 0) {
        ctx.nodes[index].leaf_weight = -g_sum / (h_sum + lambda);
        return index;
    }

    ctx.gain_acc[best_feature] += best_gain;
    ctx.cover_acc[best_feature] += h_sum;
    ctx.freq_acc[best_feature] += 1.0;

    std::vector<int> left_rows, right_rows;
    for (int r : rows_here) {
        if (ctx.rows(r, best_feature) < 0.5)
            left_rows.push_back(r);
        else
            right_rows.push_back(r);
    }
    ctx.nodes[index].feature = best_feature;
    ctx.nodes[index].threshold = 0.5;
    const int left = build_node(ctx, left_rows, depth + 1);
    const int right = build_node(ctx, right_rows, depth + 1);
    ctx.nodes[index].left = left;
    ctx.nodes[index].right = right;
    return index;
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

double GbdtModel::predict_margin(const Eigen::Ref<const Eigen::RowVectorXd>& row) const {
    double margin = base_margin;
    for (const auto& tree : trees) {
        int at = 0;
        while (tree[at].feature >= 0)
            at = row[tree[at].feature] < tree[at].threshold ? tree[at].left : tree[at].right;
        margin += params.learning_rate * tree[at].leaf_weight;
    }
    return margin;
}

Vector GbdtModel::predict_margins(const Matrix& rows) const {
    Vector margins(rows.rows());
    for (Eigen::Index r = 0; r < rows.rows(); ++r) margins[r] = predict_margin(rows.row(r));
    return margins;
}

double logloss(const Vector& margins, const std::vector<int>& labels) {
    double loss = 0.0;
    for (Eigen::Index i = 0; i < margins.size(); ++i) {
        const double p = std::clamp(sigmoid(margins[i]), 1e-15, 1.0 - 1e-15);
        loss -= labels[static_cast<std::size_t>(i)] == 1 ? std::log(p) : std::log(1.0 - p);
    }
    return loss / static_cast<double>(margins.size());
}

GbdtModel gbdt_train(const Matrix& rows, const std::vector<int>& labels,
                     const GbdtParams& params) {
    if (static_cast<std::size_t>(rows.rows()) != labels.size())
        throw DataError("gbdt_train: rows and labels disagree");
    if (rows.rows() == 0) throw DataError("gbdt_train: empty batch");
    const Eigen::Index n = rows.rows();
    const Eigen::Index d = rows.cols();

    GbdtModel model;
    model.params = params;
    model.gain_importance = Vector::Zero(d);
    model.cover_importance = Vector::Zero(d);
    model.frequency_importance = Vector::Zero(d);

    double mean_label =
        std::accumulate(labels.begin(), labels.end(), 0.0) / static_cast<double>(n);
    const bool single_class = mean_label == 0.0 || mean_label == 1.0;
    mean_label = std::clamp(mean_label, 1e-6, 1.0 - 1e-6);
    model.base_margin = std::log(mean_label / (1.0 - mean_label));
    if (single_class) {
        model.degenerate = true;
        return model;
    }

    Vector margins = Vector::Constant(n, model.base_margin);
    Vector grad(n), hess(n);
    for (int round = 0; round < params.num_rounds; ++round) {
        for (Eigen::Index i = 0; i < n; ++i) {
            const double p = sigmoid(margins[i]);
            grad[i] = p - static_cast<double>(labels[static_cast<std::size_t>(i)]);
            hess[i] = p * (1.0 - p);
        }
        std::vector<TreeNode> nodes;
        BuildContext ctx{rows,  grad,
                         hess,  params,
                         nodes, model.gain_importance,
                         model.cover_importance, model.frequency_importance};
        std::vector<int> all_rows(static_cast<std::size_t>(n));
        std::iota(all_rows.begin(), all_rows.end(), 0);
        build_node(ctx, all_rows, 0);

        for (Eigen::Index i = 0; i < n; ++i) {
            int at = 0;
            while (nodes[static_cast<std::size_t>(at)].feature >= 0) {
                const auto& node = nodes[static_cast<std::size_t>(at)];
                at = rows(i, node.feature) < node.threshold ? node.left : node.right;
            }
            margins[i] += params.learning_rate * nodes[static_cast<std::size_t>(at)].leaf_weight;
        }
        model.trees.push_back(std::move(nodes));
        model.train_logloss.push_back(logloss(margins, labels));
    }

    const double total_gain = model.gain_importance.sum();
    if (total_gain > 0.0) model.gain_importance /= total_gain;
    return model;
}

GbdtModel gbdt_train(const CycleBatch& batch, const GbdtParams& params) {
    return gbdt_train(batch.stacked, batch.labels_per_row, params);
}

std::vector<int> structural_evidence(const PcaResult& pca, const GbdtModel& model,
                                     const SelectionPolicy& policy) {
    // A degenerate (single-class) or splitless model carries no behavioral
    // evidence; its flagged status empties the intersection.
    if (model.degenerate || model.gain_importance.sum() == 0.0) return {};
    auto pca_top = select_top_fraction(pca.feature_scores, policy.frac_pca);
    auto xgb_top = select_top_fraction(model.gain_importance, policy.frac_xgb);
    std::set<int> pca_set(pca_top.begin(), pca_top.end());
    std::vector<int> intersection;
    for (int f : xgb_top)
        if (pca_set.count(f)) intersection.push_back(f);
    std::sort(intersection.begin(), intersection.end());
    return intersection;
}

}  // namespace rca
