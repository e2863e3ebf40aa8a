#include "rca/dependency.hpp"

#include "rca/cycles.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace rca {

Matrix pearson_matrix(const CycleSeries& cycle) {
    const Eigen::Index n = cycle.rows();
    const Eigen::Index d = cycle.dims();
    if (n < 2) throw DataError("pearson_matrix needs at least 2 rows, cycle " +
                               std::to_string(cycle.cycle_id) + " has " + std::to_string(n));
    Matrix centered = cycle.matrix.rowwise() - cycle.matrix.colwise().mean();
    Vector ss = centered.colwise().squaredNorm().transpose();
    Matrix cov = centered.transpose() * centered;
    Matrix pcc = Matrix::Zero(d, d);
    for (Eigen::Index i = 0; i < d; ++i) {
        if (ss[i] == 0.0) continue;
        for (Eigen::Index j = 0; j <= i; ++j) {
            if (ss[j] == 0.0) continue;
            const double r = cov(i, j) / std::sqrt(ss[i] * ss[j]);
            pcc(i, j) = r;
            pcc(j, i) = r;
        }
    }
    return pcc;
}

Matrix mutual_information_matrix(const CycleSeries& cycle) {
    const Eigen::Index n = cycle.rows();
    const Eigen::Index d = cycle.dims();
    if (n < 1) throw DataError("mutual_information_matrix needs at least 1 row");
    const double inv_n = 1.0 / static_cast<double>(n);
    Vector ones_count = cycle.matrix.colwise().sum().transpose();
    // joint11(i,j) = #rows with x_i = 1 and x_j = 1; the other three joint
    // counts follow from the marginals.
    Matrix joint11 = cycle.matrix.transpose() * cycle.matrix;
    Matrix mi(d, d);
    for (Eigen::Index i = 0; i < d; ++i) {
        for (Eigen::Index j = 0; j <= i; ++j) {
            const double c11 = joint11(i, j);
            const double c10 = ones_count[i] - c11;
            const double c01 = ones_count[j] - c11;
            const double c00 = static_cast<double>(n) - c11 - c10 - c01;
            const double p1i = ones_count[i] * inv_n;
            const double p1j = ones_count[j] * inv_n;
            const double marg_i[2] = {1.0 - p1i, p1i};
            const double marg_j[2] = {1.0 - p1j, p1j};
            const double joint[2][2] = {{c00 * inv_n, c01 * inv_n}, {c10 * inv_n, c11 * inv_n}};
            double value = 0.0;
            for (int a = 0; a < 2; ++a)
                for (int b = 0; b < 2; ++b) {
                    const double p = joint[a][b];
                    if (p > 0.0) value += p * std::log2(p / (marg_i[a] * marg_j[b]));
                }
            mi(i, j) = value;
            mi(j, i) = value;
        }
    }
    return mi;
}

DependencyMatrices dependency_matrices(const CycleSeries& cycle) {
    return {cycle.cycle_id, pearson_matrix(cycle), mutual_information_matrix(cycle)};
}

Vector pcc_significance(const Matrix& pcc) {
    Vector sig = pcc.cwiseAbs().rowwise().sum();
    sig -= pcc.diagonal().cwiseAbs();
    return sig;
}

Vector mi_significance(const Matrix& mi) {
    Vector sig = mi.rowwise().sum();
    sig -= mi.diagonal();
    return sig;
}

std::vector<int> dependency_evidence(const CycleSeries& cycle, const SelectionPolicy& policy) {
    DependencyMatrices dep = dependency_matrices(cycle);
    auto from_pcc = select_top_fraction(pcc_significance(dep.pcc), policy.frac_i2);
    auto from_mi = select_top_fraction(mi_significance(dep.mi), policy.frac_i2);
    std::set<int> merged(from_pcc.begin(), from_pcc.end());
    merged.insert(from_mi.begin(), from_mi.end());
    return {merged.begin(), merged.end()};
}

}  // namespace rca
