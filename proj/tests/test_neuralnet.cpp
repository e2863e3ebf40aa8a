#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "rca/cycles.hpp"
#include "rca/net.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <sstream>

using namespace rca;

namespace {

Matrix random_binary(Eigen::Index n, Eigen::Index d, std::uint64_t seed) {
    Rng rng(seed);
    Matrix m(n, d);
    for (Eigen::Index r = 0; r < n; ++r)
        for (Eigen::Index c = 0; c < d; ++c) m(r, c) = uniform01(rng) < 0.5 ? 0.0 : 1.0;
    return m;
}

double loss_at(const DenseNet& net, const Matrix& rows, const FisherInfo* fisher) {
    Matrix recon = forward(net, rows, false, nullptr);
    return loss_parts(net, rows, recon, fisher).total();
}

// Central finite differences against the analytic gradient; returns the
// worst relative error over every parameter.
double max_gradient_error(DenseNet net, const Matrix& rows, const FisherInfo* fisher,
                          double h = 1e-5) {
    ForwardCache cache;
    forward(net, rows, false, nullptr, &cache);
    ParamSet analytic = backward(net, rows, cache, fisher);

    double worst = 0.0;
    auto probe = [&](double& theta, double analytic_g) {
        const double saved = theta;
        theta = saved + h;
        const double up = loss_at(net, rows, fisher);
        theta = saved - h;
        const double down = loss_at(net, rows, fisher);
        theta = saved;
        const double fd = (up - down) / (2.0 * h);
        const double rel = std::abs(analytic_g - fd) /
                           std::max({std::abs(analytic_g), std::abs(fd), 1e-5});
        worst = std::max(worst, rel);
    };
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        auto& w = net.layers[l].weights;
        for (Eigen::Index i = 0; i < w.size(); ++i)
            probe(w.data()[i], analytic.weights[l].data()[i]);
        auto& b = net.layers[l].bias;
        for (Eigen::Index i = 0; i < b.size(); ++i)
            probe(b.data()[i], analytic.bias[l].data()[i]);
    }
    return worst;
}

FisherInfo scrambled_fisher(const DenseNet& net, double lambda, std::uint64_t seed) {
    FisherInfo fisher = FisherInfo::init(net, lambda, 50);
    Rng rng(seed);
    for (std::size_t l = 0; l < fisher.fisher.weights.size(); ++l) {
        for (Eigen::Index i = 0; i < fisher.fisher.weights[l].size(); ++i) {
            fisher.fisher.weights[l].data()[i] = 2.0 * uniform01(rng);
            fisher.anchor.weights[l].data()[i] += 0.3 * (uniform01(rng) - 0.5);
        }
        for (Eigen::Index i = 0; i < fisher.fisher.bias[l].size(); ++i) {
            fisher.fisher.bias[l].data()[i] = 2.0 * uniform01(rng);
            fisher.anchor.bias[l].data()[i] += 0.3 * (uniform01(rng) - 0.5);
        }
    }
    return fisher;
}

CycleBatch batch_of(const Matrix& rows, int start_cycle, int flag = 0) {
    CycleSeries cs;
    cs.cycle_id = start_cycle;
    cs.matrix = rows;
    cs.states.assign(static_cast<std::size_t>(rows.rows()), 1);
    return assemble_batch({cs}, {flag});
}

}  // namespace

TEST_CASE("forward pass shapes and sigmoid bounds") {
    DenseNet net = make_autoencoder(26, {32, 16, 8}, 0.2, 0.01, 0.01, 3);
    REQUIRE(net.layers.size() == 6);
    CHECK(net.layers[2].weights.rows() == 8);  // bottleneck width
    CHECK(net.layers[2].weights.cols() == 16);
    CHECK(net.layers.back().activation == Activation::Sigmoid);
    CHECK(net.layers.back().dropout_rate == 0.0);

    Matrix rows = random_binary(7, 26, 5);
    Matrix out = forward(net, rows, false, nullptr);
    CHECK(out.rows() == 7);
    CHECK(out.cols() == 26);
    CHECK(out.minCoeff() >= 0.0);
    CHECK(out.maxCoeff() <= 1.0);

    Matrix bad = random_binary(4, 25, 5);
    CHECK_THROWS_AS(forward(net, bad, false, nullptr), DataError);
}

TEST_CASE("zero net reconstructs sigmoid(0) = 0.5 everywhere") {
    DenseNet net = make_autoencoder(5, {4, 3}, 0.0, 0.0, 0.0, 1);
    for (auto& layer : net.layers) {
        layer.weights.setZero();
        layer.bias.setZero();
    }
    Matrix out = forward(net, random_binary(6, 5, 2), false, nullptr);
    CHECK((out.array() == 0.5).all());
}

TEST_CASE("inference is deterministic; training applies dropout noise") {
    DenseNet net = make_autoencoder(10, {8, 4}, 0.5, 0.0, 0.0, 9);
    Matrix rows = random_binary(12, 10, 3);
    Matrix a = forward(net, rows, false, nullptr);
    Matrix b = forward(net, rows, false, nullptr);
    CHECK(a == b);

    Rng rng(17);
    Matrix t1 = forward(net, rows, true, &rng);
    Matrix t2 = forward(net, rows, true, &rng);
    CHECK(t1 != t2);
}

TEST_CASE("loss parts: EWC anchor and hand-computed penalty") {
    SUBCASE("theta at the anchor gives exactly zero EWC") {
        DenseNet net = make_autoencoder(6, {4}, 0.0, 0.01, 0.01, 7);
        FisherInfo fisher = FisherInfo::init(net, 0.4, 50);
        for (auto& f : fisher.fisher.weights) f.setConstant(3.0);
        Matrix rows = random_binary(5, 6, 1);
        LossParts parts = loss_parts(net, rows, forward(net, rows, false, nullptr), &fisher);
        CHECK(parts.ewc == 0.0);
    }
    SUBCASE("single parameter, lambda 0.4, F=2, deviation 0.5 -> 0.1") {
        DenseNet net;
        net.layers.push_back(
            {Matrix::Constant(1, 1, 1.5), Vector::Zero(1), Activation::Identity, 0.0});
        FisherInfo fisher = FisherInfo::init(net, 0.4, 50);
        fisher.fisher.weights[0](0, 0) = 2.0;
        fisher.anchor.weights[0](0, 0) = 1.0;  // deviation 0.5
        Matrix rows = Matrix::Zero(1, 1);
        LossParts parts = loss_parts(net, rows, forward(net, rows, false, nullptr), &fisher);
        CHECK(parts.ewc == doctest::Approx(0.1).epsilon(1e-12));
    }
    SUBCASE("perfect reconstruction has zero mse") {
        DenseNet net = make_autoencoder(4, {3}, 0.0, 0.0, 0.0, 2);
        Matrix rows = random_binary(5, 4, 8);
        LossParts parts = loss_parts(net, rows, rows, nullptr);
        CHECK(parts.mse == 0.0);
    }
}

TEST_CASE("analytic gradients match central finite differences") {
    SUBCASE("3-4-3 toy net, full loss with EWC, L1 and L2") {
        DenseNet net = make_autoencoder(3, {4}, 0.0, 0.01, 0.01, 21);
        FisherInfo fisher = scrambled_fisher(net, 0.4, 22);
        Matrix rows = random_binary(6, 3, 23);
        CHECK(max_gradient_error(net, rows, &fisher) < 1e-4);
    }
    SUBCASE("deeper stack without regularization") {
        DenseNet net = make_autoencoder(5, {6, 3}, 0.0, 0.0, 0.0, 31);
        Matrix rows = random_binary(9, 5, 32);
        CHECK(max_gradient_error(net, rows, nullptr) < 1e-4);
    }
}

TEST_CASE("training on a fixed batch reduces reconstruction error") {
    DenseNet net = make_autoencoder(8, {6, 4}, 0.0, 0.0, 0.0, 41);
    AdamState adam = AdamState::init(net, 1e-2);
    Matrix rows = random_binary(32, 8, 42);
    Rng rng(43);
    std::vector<double> mse_track;
    for (int step = 0; step < 200; ++step) {
        auto parts = backward_and_step(net, rows, nullptr, adam, rng, false);
        REQUIRE(parts.has_value());
        mse_track.push_back(parts->mse);
    }
    for (std::size_t k = 0; k + 50 < mse_track.size(); ++k)
        CHECK(mse_track[k + 50] < mse_track[k]);
}

TEST_CASE("zero learning rate leaves parameters unchanged") {
    DenseNet net = make_autoencoder(6, {4}, 0.0, 0.01, 0.01, 51);
    DenseNet before = net;
    AdamState adam = AdamState::init(net, 0.0);
    Rng rng(52);
    backward_and_step(net, random_binary(8, 6, 53), nullptr, adam, rng, false);
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        CHECK(net.layers[l].weights == before.layers[l].weights);
        CHECK(net.layers[l].bias == before.layers[l].bias);
    }
}

TEST_CASE("empirical Fisher properties") {
    DenseNet net = make_autoencoder(5, {3}, 0.0, 0.01, 0.01, 61);
    Matrix rows = random_binary(6, 5, 62);

    FisherInfo fisher = compute_fisher(net, rows, 0.4, 50);
    SUBCASE("entries are nonnegative and the anchor matches the net") {
        for (std::size_t l = 0; l < fisher.fisher.weights.size(); ++l) {
            CHECK(fisher.fisher.weights[l].minCoeff() >= 0.0);
            CHECK(fisher.fisher.bias[l].minCoeff() >= 0.0);
            CHECK(fisher.anchor.weights[l] == net.layers[l].weights);
        }
    }
    SUBCASE("duplicating every sample row leaves the mean unchanged") {
        Matrix doubled(rows.rows() * 2, rows.cols());
        doubled << rows, rows;
        FisherInfo twice = compute_fisher(net, doubled, 0.4, 50);
        for (std::size_t l = 0; l < fisher.fisher.weights.size(); ++l) {
            CHECK((fisher.fisher.weights[l] - twice.fisher.weights[l]).cwiseAbs().maxCoeff() <
                  1e-12);
        }
    }
    SUBCASE("constant zero input on a zero-bias net stays finite") {
        DenseNet zeroed = net;
        for (auto& layer : zeroed.layers) layer.bias.setZero();
        FisherInfo f = compute_fisher(zeroed, Matrix::Zero(4, 5), 0.4, 50);
        for (std::size_t l = 0; l < f.fisher.weights.size(); ++l) {
            CHECK(f.fisher.weights[l].allFinite());
            CHECK(f.fisher.bias[l].allFinite());
        }
    }
}

TEST_CASE("replay sample count follows len/8 + 3 with the buffer cap") {
    CHECK(Iae::replay_sample_count(8) == 4);
    CHECK(Iae::replay_sample_count(100) == 15);
    CHECK(Iae::replay_sample_count(2) == 2);  // formula exceeds a young buffer
    CHECK(Iae::replay_sample_count(0) == 0);
    CHECK(Iae::replay_sample_count(1) == 1);
}

TEST_CASE("replay buffer caps at 100 with strict FIFO eviction") {
    IaeConfig config;
    config.encoder_widths = {4};
    config.epochs_per_batch = 0;  // buffer mechanics only
    config.replay_period_batches = 0;
    config.seed = 71;
    Iae iae(4, config);
    for (int i = 0; i < 105; ++i) {
        Matrix rows = Matrix::Constant(2, 4, static_cast<double>(i));
        iae.train_batch(batch_of(rows, i + 1));
    }
    CHECK(iae.replay_size() == 100);
    CHECK(iae.replay_buffer().front()(0, 0) == 5.0);  // batches 0..4 evicted
    CHECK(iae.replay_buffer().back()(0, 0) == 104.0);
    CHECK(iae.batches_seen() == 105);
    CHECK(iae.cycles_seen() == 105);
}

TEST_CASE("score_cycle selects top-t and next-t disjoint evidence sets") {
    IaeConfig config;
    config.seed = 81;
    Iae iae(26, config);
    CycleSeries cycle;
    cycle.cycle_id = 9;
    cycle.matrix = random_binary(20, 26, 82);
    cycle.states.assign(20, 1);
    SelectionPolicy policy;
    CycleScore score = iae.score_cycle(cycle, policy);
    CHECK(score.scores.cycle_id == 9);
    CHECK(score.scores.per_feature.size() == 26);
    CHECK(score.scores.per_feature.minCoeff() >= 0.0);
    REQUIRE(score.i1a.size() == 1);
    REQUIRE(score.i1b.size() == 1);
    CHECK(score.i1a[0] != score.i1b[0]);

    SUBCASE("deterministic given model state") {
        CycleScore again = iae.score_cycle(cycle, policy);
        CHECK(again.scores.per_feature == score.scores.per_feature);
        CHECK(again.i1a == score.i1a);
        CHECK(again.i1b == score.i1b);
    }
}

TEST_CASE("perfectly reconstructed cycle falls back to the tie rule") {
    IaeConfig config;
    config.encoder_widths = {3};
    config.seed = 91;
    Iae iae(6, config);
    // Zero the parameters through the checkpoint path: sigmoid(0) = 0.5
    // reconstructs a 0.5-valued cycle exactly.
    std::ostringstream saved;
    iae.save(saved);
    nlohmann::json doc = nlohmann::json::parse(saved.str());
    for (auto& layer : doc["layers"]) {
        for (auto& v : layer["weights"]["data"]) v = 0.0;
        for (auto& v : layer["bias"]) v = 0.0;
    }
    std::istringstream edited(doc.dump());
    Iae zeroed = Iae::load(edited);

    CycleSeries cycle;
    cycle.cycle_id = 1;
    cycle.matrix = Matrix::Constant(5, 6, 0.5);
    cycle.states.assign(5, 1);
    CycleScore score = zeroed.score_cycle(cycle, SelectionPolicy{});
    CHECK(score.scores.per_feature.maxCoeff() == 0.0);
    CHECK(score.i1a == std::vector<int>{0});
    CHECK(score.i1b == std::vector<int>{1});
}

TEST_CASE("an inverted feature column tops the anomaly ranking") {
    IaeConfig config;
    config.encoder_widths = {8, 4};
    config.dropout_rate = 0.1;
    config.seed = 101;
    config.replay_period_batches = 5;
    Iae iae(8, config);

    Rng rng(102);
    Matrix pattern(4, 8);
    for (Eigen::Index r = 0; r < 4; ++r)
        for (Eigen::Index c = 0; c < 8; ++c) pattern(r, c) = uniform01(rng) < 0.5 ? 0.0 : 1.0;
    auto make_rows = [&](int copies) {
        Matrix rows(4 * copies, 8);
        for (int k = 0; k < copies; ++k) rows.middleRows(4 * k, 4) = pattern;
        return rows;
    };
    for (int b = 0; b < 40; ++b) iae.train_batch(batch_of(make_rows(8), b + 1));

    CycleSeries cycle;
    cycle.cycle_id = 99;
    cycle.matrix = make_rows(4);
    const int culprit = 5;
    cycle.matrix.col(culprit) = Vector::Ones(cycle.matrix.rows()) - cycle.matrix.col(culprit);
    cycle.states.assign(static_cast<std::size_t>(cycle.matrix.rows()), 1);
    CycleScore score = iae.score_cycle(cycle, SelectionPolicy{});
    CHECK(score.i1a == std::vector<int>{culprit});
}

TEST_CASE("checkpoints resume training exactly") {
    IaeConfig config;
    config.encoder_widths = {6, 3};
    config.replay_period_batches = 3;
    config.fisher_period_cycles = 4;
    config.seed = 111;
    Iae original(7, config);

    std::vector<CycleBatch> batches;
    for (int b = 0; b < 12; ++b)
        batches.push_back(batch_of(random_binary(10, 7, 200 + static_cast<std::uint64_t>(b)),
                                   b + 1));

    for (int b = 0; b < 6; ++b) original.train_batch(batches[static_cast<std::size_t>(b)]);
    std::ostringstream saved;
    original.save(saved);
    std::istringstream stream(saved.str());
    Iae resumed = Iae::load(stream);

    for (int b = 6; b < 12; ++b) {
        original.train_batch(batches[static_cast<std::size_t>(b)]);
        resumed.train_batch(batches[static_cast<std::size_t>(b)]);
    }
    for (std::size_t l = 0; l < original.net().layers.size(); ++l) {
        CHECK(original.net().layers[l].weights == resumed.net().layers[l].weights);
        CHECK(original.net().layers[l].bias == resumed.net().layers[l].bias);
    }
    CHECK(original.replay_size() == resumed.replay_size());
    CHECK(original.cycles_seen() == resumed.cycles_seen());
}

TEST_CASE("EWC with replay resists forgetting an earlier distribution") {
    auto run = [&](double lambda, int replay_period) {
        IaeConfig config;
        config.encoder_widths = {10, 5};
        config.lambda_ewc = lambda;
        config.replay_period_batches = replay_period;
        config.fisher_period_cycles = 10;
        config.seed = 121;
        Iae iae(12, config);

        Matrix dist_a = random_binary(500, 12, 301);
        Matrix dist_b = random_binary(500, 12, 302);
        Rng slicer(303);
        auto slice = [&](const Matrix& pool, int rows_n) {
            Matrix rows(rows_n, pool.cols());
            for (int r = 0; r < rows_n; ++r)
                rows.row(r) = pool.row(static_cast<Eigen::Index>(
                    uniform_index(slicer, static_cast<std::size_t>(pool.rows()))));
            return rows;
        };
        for (int b = 0; b < 30; ++b) iae.train_batch(batch_of(slice(dist_a, 40), b + 1));
        for (int b = 0; b < 30; ++b) iae.train_batch(batch_of(slice(dist_b, 40), 31 + b));
        return iae.mean_reconstruction_error(dist_a.topRows(200));
    };
    const double protected_error = run(0.4, 10);
    const double ablated_error = run(0.0, 0);
    CHECK(protected_error < ablated_error);
}
