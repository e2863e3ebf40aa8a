#include "rca/baselines.hpp"

#include "rca/cycles.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace rca {

namespace {

// Average unsuccessful-search path length in a BST of m points.
double avg_path_length(int m) {
    if (m <= 1) return 0.0;
    if (m == 2) return 1.0;
    const double h = std::log(static_cast<double>(m - 1)) + 0.5772156649015329;
    return 2.0 * h - 2.0 * static_cast<double>(m - 1) / static_cast<double>(m);
}

struct TreeBuilder {
    const Matrix& rows;
    std::vector<IsolationNode>& nodes;
    Rng& rng;
    int max_depth;

    int build(std::vector<int>& members, int depth) {
        const int index = static_cast<int>(nodes.size());
        nodes.emplace_back();
        nodes[index].size = static_cast<int>(members.size());
        if (depth >= max_depth || members.size() <= 1) return index;

        std::vector<int> varying;
        for (int f = 0; f < static_cast<int>(rows.cols()); ++f) {
            const double first = rows(members.front(), f);
            for (int r : members) {
                if (rows(r, f) != first) {
                    varying.push_back(f);
                    break;
                }
            }
        }
        if (varying.empty()) return index;  // identical rows isolate no further

        const int feature = varying[uniform_index(rng, varying.size())];
        const double threshold = uniform01(rng);  // any value in (0,1) splits binary data
        std::vector<int> left, right;
        for (int r : members) {
            if (rows(r, feature) < threshold)
                left.push_back(r);
            else
                right.push_back(r);
        }
        if (left.empty() || right.empty()) return index;

        nodes[index].feature = feature;
        nodes[index].threshold = threshold;
        const int l = build(left, depth + 1);
        const int r = build(right, depth + 1);
        nodes[index].left = l;
        nodes[index].right = r;
        return index;
    }
};

}  // namespace

IsolationForestModel iforest_train(const Matrix& rows, const IsolationForestParams& params,
                                   std::uint64_t seed) {
    if (rows.rows() < 1) throw DataError("iforest_train: empty training data");
    IsolationForestModel model;
    model.subsample = static_cast<int>(std::min<Eigen::Index>(params.subsample, rows.rows()));
    model.contamination = params.contamination;
    const int max_depth =
        static_cast<int>(std::ceil(std::log2(std::max(2.0, static_cast<double>(model.subsample)))));
    Rng rng(derive_seed(seed, "iforest"));
    for (int t = 0; t < params.num_trees; ++t) {
        std::vector<int> sample(static_cast<std::size_t>(model.subsample));
        for (auto& s : sample)
            s = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(rows.rows())));
        std::vector<IsolationNode> nodes;
        TreeBuilder builder{rows, nodes, rng, max_depth};
        builder.build(sample, 0);
        model.trees.push_back(std::move(nodes));
    }
    model.trained = true;
    return model;
}

double iforest_score(const IsolationForestModel& model,
                     const Eigen::Ref<const Eigen::RowVectorXd>& row) {
    if (!model.trained) throw DataError("isolation forest used before training");
    double mean_path = 0.0;
    for (const auto& tree : model.trees) {
        int at = 0;
        int depth = 0;
        while (tree[at].feature >= 0) {
            at = row[tree[at].feature] < tree[at].threshold ? tree[at].left : tree[at].right;
            ++depth;
        }
        mean_path += depth + avg_path_length(tree[at].size);
    }
    mean_path /= static_cast<double>(model.trees.size());
    return std::exp2(-mean_path / avg_path_length(model.subsample));
}

std::vector<int> iforest_root_causes(const IsolationForestModel& model, const CycleSeries& cycle,
                                     const SelectionPolicy& policy) {
    if (!model.trained) throw DataError("isolation forest used before training");
    const Eigen::Index n = cycle.rows();
    Vector scores(n);
    for (Eigen::Index r = 0; r < n; ++r) scores[r] = iforest_score(model, cycle.matrix.row(r));

    const int take = std::max(
        1, static_cast<int>(std::llround(model.contamination * static_cast<double>(n))));
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    });
    order.resize(static_cast<std::size_t>(std::min<Eigen::Index>(take, n)));

    Vector attribution = Vector::Zero(cycle.dims());
    for (int r : order) {
        for (const auto& tree : model.trees) {
            int at = 0;
            while (tree[at].feature >= 0) {
                const auto& node = tree[at];
                const int next =
                    cycle.matrix(r, node.feature) < node.threshold ? node.left : node.right;
                attribution[node.feature] +=
                    avg_path_length(node.size) - avg_path_length(tree[next].size);
                at = next;
            }
        }
    }
    attribution /= static_cast<double>(order.size() * model.trees.size());

    return select_top_fraction(attribution, std::min(1.0, 2.0 * policy.frac_i1));
}

Vector knn_feature_attribution(const KnnModel& model, const Matrix& cycle_rows) {
    const Eigen::Index n_ref = model.reference.rows();
    if (n_ref < 1) throw DataError("knn: empty reference set");
    if (model.k < 1 || model.k > n_ref)
        throw DataError("knn: k=" + std::to_string(model.k) + " exceeds reference size " +
                        std::to_string(n_ref));
    const Eigen::Index d = cycle_rows.cols();
    Vector attribution = Vector::Zero(d);
    std::vector<int> order(static_cast<std::size_t>(n_ref));
    for (Eigen::Index r = 0; r < cycle_rows.rows(); ++r) {
        // Hamming distance: the matrices are binary, so |x - y| sums differ-bits.
        Vector dist = (model.reference.rowwise() - cycle_rows.row(r)).cwiseAbs().rowwise().sum();
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
            if (dist[a] != dist[b]) return dist[a] < dist[b];
            return a < b;
        });
        Vector neighbor_mean = Vector::Zero(d);
        for (int i = 0; i < model.k; ++i) neighbor_mean += model.reference.row(order[i]).transpose();
        neighbor_mean /= static_cast<double>(model.k);
        attribution += (cycle_rows.row(r).transpose() - neighbor_mean).cwiseAbs();
    }
    return attribution / static_cast<double>(cycle_rows.rows());
}

std::vector<int> knn_root_causes(const KnnModel& model, const CycleSeries& cycle,
                                 const SelectionPolicy& policy) {
    Vector attribution = knn_feature_attribution(model, cycle.matrix);
    return select_top_fraction(attribution, std::min(1.0, 2.0 * policy.frac_i1));
}

}  // namespace rca
