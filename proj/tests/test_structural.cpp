#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "rca/cycles.hpp"
#include "rca/rng.hpp"
#include "rca/structural.hpp"

#include <algorithm>
#include <cmath>

using namespace rca;

namespace {

CycleSeries cycle_from(const Matrix& m, int id = 1) {
    CycleSeries cs;
    cs.cycle_id = id;
    cs.matrix = m;
    cs.states.assign(static_cast<std::size_t>(m.rows()), 1);
    return cs;
}

Matrix random_binary(Eigen::Index n, Eigen::Index d, Rng& rng) {
    Matrix m(n, d);
    for (Eigen::Index r = 0; r < n; ++r)
        for (Eigen::Index c = 0; c < d; ++c) m(r, c) = uniform01(rng) < 0.5 ? 0.0 : 1.0;
    return m;
}

Matrix covariance_of(const Matrix& rows) {
    Matrix centered = rows.rowwise() - rows.colwise().mean();
    return centered.transpose() * centered / static_cast<double>(rows.rows() - 1);
}

// Cyclic Jacobi eigenvalue sweep; an independent reference for the solver
// behind pca_cycle.
std::vector<double> jacobi_eigenvalues(Matrix a) {
    const Eigen::Index n = a.rows();
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (Eigen::Index p = 0; p < n; ++p)
            for (Eigen::Index q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
        if (off < 1e-26) break;
        for (Eigen::Index p = 0; p < n; ++p) {
            for (Eigen::Index q = p + 1; q < n; ++q) {
                if (std::abs(a(p, q)) < 1e-300) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
            }
        }
    }
    std::vector<double> eig(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) eig[static_cast<std::size_t>(i)] = a(i, i);
    std::sort(eig.begin(), eig.end(), std::greater<>());
    return eig;
}

// Fixture where one feature alone separates the two row classes.
std::pair<Matrix, std::vector<int>> separating_fixture(Eigen::Index n, Eigen::Index d,
                                                       int culprit, Rng& rng) {
    Matrix rows = random_binary(n, d, rng);
    std::vector<int> labels(static_cast<std::size_t>(n));
    for (Eigen::Index r = 0; r < n; ++r) {
        rows(r, culprit) = r % 2;
        labels[static_cast<std::size_t>(r)] = r % 2;
    }
    return {rows, labels};
}

}  // namespace

TEST_CASE("pca on two perfectly correlated columns") {
    Matrix m(6, 4);
    m.setZero();
    for (Eigen::Index r = 0; r < 6; ++r) {
        m(r, 1) = r % 2;
        m(r, 2) = r % 2;
    }
    m.col(0).setOnes();  // constant columns carry no variance
    PcaResult pca = pca_cycle(cycle_from(m));
    CHECK(pca.explained_variance_ratio[0] == doctest::Approx(1.0));
    CHECK(pca.components_kept == 1);
    CHECK(std::abs(pca.components(1, 0)) == doctest::Approx(1.0 / std::sqrt(2.0)));
    CHECK(std::abs(pca.components(2, 0)) == doctest::Approx(1.0 / std::sqrt(2.0)));
    CHECK(pca.feature_scores[0] == doctest::Approx(0.0));
    CHECK(pca.feature_scores[1] > 0.5);
}

TEST_CASE("pca on an all-constant cycle scores every feature zero") {
    Matrix m = Matrix::Ones(5, 3);
    PcaResult pca = pca_cycle(cycle_from(m));
    CHECK(pca.feature_scores.maxCoeff() == 0.0);
    CHECK(pca.explained_variance_ratio.maxCoeff() == 0.0);
    CHECK_THROWS_AS(pca_cycle(cycle_from(Matrix::Zero(1, 3))), DataError);
}

TEST_CASE("pca eigenvalues match the Jacobi oracle") {
    Rng rng(77);
    Matrix m = random_binary(12, 5, rng);
    PcaResult pca = pca_cycle(cycle_from(m));
    Matrix cov = covariance_of(m);
    auto reference = jacobi_eigenvalues(cov);
    REQUIRE(static_cast<Eigen::Index>(reference.size()) == pca.eigenvalues.size());
    for (Eigen::Index i = 0; i < pca.eigenvalues.size(); ++i)
        CHECK(pca.eigenvalues[i] ==
              doctest::Approx(reference[static_cast<std::size_t>(i)]).epsilon(1e-8));
    CHECK(pca.eigenvalues.sum() == doctest::Approx(cov.trace()).epsilon(1e-8));
}

TEST_CASE("pca components stay orthonormal and reconstruct the data") {
    Rng rng(78);
    for (int trial = 0; trial < 20; ++trial) {
        const Eigen::Index n = 4 + static_cast<Eigen::Index>(uniform_index(rng, 20));
        const Eigen::Index d = 2 + static_cast<Eigen::Index>(uniform_index(rng, 8));
        Matrix m = random_binary(n, d, rng);
        PcaResult pca = pca_cycle(cycle_from(m));
        Matrix gram = pca.components.transpose() * pca.components;
        CHECK((gram - Matrix::Identity(d, d)).cwiseAbs().maxCoeff() < 1e-8);
        Matrix centered = m.rowwise() - m.colwise().mean();
        Matrix reconstructed = centered * pca.components * pca.components.transpose();
        CHECK((reconstructed - centered).norm() < 1e-8);
    }
}

TEST_CASE("pca_components override pins the kept component count") {
    Rng rng(79);
    Matrix m = random_binary(15, 6, rng);
    CHECK(pca_cycle(cycle_from(m), 3).components_kept == 3);
    CHECK(pca_cycle(cycle_from(m), 100).components_kept == 6);  // clamped to d
}

TEST_CASE("gbdt concentrates importance on the separating feature") {
    Rng rng(81);
    auto [rows, labels] = separating_fixture(60, 6, 3, rng);
    GbdtModel model = gbdt_train(rows, labels, GbdtParams{});
    CHECK_FALSE(model.degenerate);
    CHECK(model.gain_importance[3] > 0.9);
    CHECK(model.gain_importance.sum() == doctest::Approx(1.0).epsilon(1e-9));

    Vector margins = model.predict_margins(rows);
    int correct = 0;
    for (Eigen::Index r = 0; r < rows.rows(); ++r)
        correct += (margins[r] > 0.0) == (labels[static_cast<std::size_t>(r)] == 1) ? 1 : 0;
    CHECK(correct == rows.rows());  // training accuracy 1.0
}

TEST_CASE("gbdt training logloss is nonincreasing over rounds") {
    Rng rng(82);
    for (int trial = 0; trial < 5; ++trial) {
        Matrix rows = random_binary(50, 8, rng);
        std::vector<int> labels(50);
        for (int r = 0; r < 50; ++r)
            labels[static_cast<std::size_t>(r)] =
                (rows(r, 1) > 0.5 || uniform01(rng) < 0.2) ? 1 : 0;
        GbdtModel model = gbdt_train(rows, labels, GbdtParams{});
        for (std::size_t k = 1; k < model.train_logloss.size(); ++k)
            CHECK(model.train_logloss[k] <= model.train_logloss[k - 1] + 1e-12);
    }
}

TEST_CASE("gbdt degenerate and zero-round paths") {
    Rng rng(83);
    Matrix rows = random_binary(20, 4, rng);
    SUBCASE("single-class labels give a flagged constant model") {
        std::vector<int> ones(20, 1);
        GbdtModel model = gbdt_train(rows, ones, GbdtParams{});
        CHECK(model.degenerate);
        CHECK(model.trees.empty());
        CHECK(model.gain_importance.maxCoeff() == 0.0);
    }
    SUBCASE("zero rounds predict the prior log-odds everywhere") {
        std::vector<int> labels(20, 0);
        for (int i = 0; i < 5; ++i) labels[static_cast<std::size_t>(i)] = 1;
        GbdtParams params;
        params.num_rounds = 0;
        GbdtModel model = gbdt_train(rows, labels, params);
        const double prior = std::log(0.25 / 0.75);
        Vector margins = model.predict_margins(rows);
        for (Eigen::Index r = 0; r < margins.size(); ++r)
            CHECK(margins[r] == doctest::Approx(prior));
    }
}

TEST_CASE("structural evidence intersects the two top sets") {
    SelectionPolicy policy;
    SUBCASE("sizing at d=26: PCA picks 2, GBDT picks 3") {
        Rng rng(84);
        Matrix m = random_binary(40, 26, rng);
        CycleSeries cycle = cycle_from(m);
        PcaResult pca = pca_cycle(cycle);
        auto pca_top = select_top_fraction(pca.feature_scores, policy.frac_pca);
        CHECK(pca_top.size() == 2);
        std::vector<int> labels(40);
        for (int r = 0; r < 40; ++r) labels[static_cast<std::size_t>(r)] = r < 13 ? 1 : 0;
        GbdtModel model = gbdt_train(m, labels, GbdtParams{});
        auto xgb_top = select_top_fraction(model.gain_importance, policy.frac_xgb);
        CHECK(xgb_top.size() == 3);
        auto i3 = structural_evidence(pca, model, policy);
        for (int f : i3) {
            CHECK(std::find(pca_top.begin(), pca_top.end(), f) != pca_top.end());
            CHECK(std::find(xgb_top.begin(), xgb_top.end(), f) != xgb_top.end());
        }
    }
    SUBCASE("a feature dominant on both sides is the intersection") {
        Rng rng(85);
        auto [rows, labels] = separating_fixture(40, 8, 2, rng);
        // make the culprit column also dominate the cycle's variance
        Matrix cycle_rows = rows;
        for (Eigen::Index c = 0; c < 8; ++c)
            if (c != 2) cycle_rows.col(c).setZero();
        GbdtModel model = gbdt_train(rows, labels, GbdtParams{});
        PcaResult pca = pca_cycle(cycle_from(cycle_rows));
        auto i3 = structural_evidence(pca, model, policy);
        CHECK(i3 == std::vector<int>{2});
    }
    SUBCASE("degenerate model contributes no behavioral evidence") {
        Rng rng(86);
        Matrix m = random_binary(20, 6, rng);
        GbdtModel model = gbdt_train(m, std::vector<int>(20, 1), GbdtParams{});
        CHECK(structural_evidence(pca_cycle(cycle_from(m)), model, policy).empty());
    }
}
