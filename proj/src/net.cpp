#include "rca/net.hpp"

#include "rca/cycles.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

namespace rca {

namespace {

Matrix apply_activation(const Matrix& z, Activation act) {
    switch (act) {
        case Activation::Relu: return z.cwiseMax(0.0);
        case Activation::Sigmoid:
            return z.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
        case Activation::Identity: break;
    }
    return z;
}

// Derivative expressed through the post-activation value.
Matrix activation_grad(const Matrix& a, Activation act) {
    switch (act) {
        case Activation::Relu:
            return a.unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; });
        case Activation::Sigmoid:
            return a.unaryExpr([](double v) { return v * (1.0 - v); });
        case Activation::Identity: break;
    }
    return Matrix::Ones(a.rows(), a.cols());
}

nlohmann::json matrix_to_json(const Matrix& m) {
    nlohmann::json j;
    j["rows"] = m.rows();
    j["cols"] = m.cols();
    std::vector<double> data(m.data(), m.data() + m.size());
    j["data"] = data;  // column-major
    return j;
}

Matrix matrix_from_json(const nlohmann::json& j) {
    Matrix m(j.at("rows").get<Eigen::Index>(), j.at("cols").get<Eigen::Index>());
    auto data = j.at("data").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(data.size()) != m.size())
        throw DataError("checkpoint matrix size mismatch");
    std::copy(data.begin(), data.end(), m.data());
    return m;
}

nlohmann::json vector_to_json(const Vector& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
}

Vector vector_from_json(const nlohmann::json& j) {
    auto data = j.get<std::vector<double>>();
    return Eigen::Map<const Vector>(data.data(), static_cast<Eigen::Index>(data.size()));
}

nlohmann::json paramset_to_json(const ParamSet& p) {
    nlohmann::json j;
    for (std::size_t i = 0; i < p.weights.size(); ++i) {
        j["weights"].push_back(matrix_to_json(p.weights[i]));
        j["bias"].push_back(vector_to_json(p.bias[i]));
    }
    return j;
}

ParamSet paramset_from_json(const nlohmann::json& j) {
    ParamSet p;
    for (const auto& w : j.at("weights")) p.weights.push_back(matrix_from_json(w));
    for (const auto& b : j.at("bias")) p.bias.push_back(vector_from_json(b));
    return p;
}

const char* activation_name(Activation a) {
    switch (a) {
        case Activation::Relu: return "relu";
        case Activation::Sigmoid: return "sigmoid";
        case Activation::Identity: break;
    }
    return "identity";
}

Activation activation_from_name(const std::string& s) {
    if (s == "relu") return Activation::Relu;
    if (s == "sigmoid") return Activation::Sigmoid;
    if (s == "identity") return Activation::Identity;
    throw DataError("unknown activation '" + s + "'");
}

}  // namespace

ParamSet ParamSet::zeros_like(const DenseNet& net) {
    ParamSet p;
    for (const auto& layer : net.layers) {
        p.weights.push_back(Matrix::Zero(layer.weights.rows(), layer.weights.cols()));
        p.bias.push_back(Vector::Zero(layer.bias.size()));
    }
    return p;
}

AdamState AdamState::init(const DenseNet& net, double learning_rate) {
    AdamState adam;
    adam.m = ParamSet::zeros_like(net);
    adam.v = ParamSet::zeros_like(net);
    adam.learning_rate = learning_rate;
    return adam;
}

FisherInfo FisherInfo::init(const DenseNet& net, double lambda, int refresh_period_cycles) {
    FisherInfo fisher;
    fisher.fisher = ParamSet::zeros_like(net);
    fisher.anchor = ParamSet::zeros_like(net);
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        fisher.anchor.weights[i] = net.layers[i].weights;
        fisher.anchor.bias[i] = net.layers[i].bias;
    }
    fisher.lambda = lambda;
    fisher.refresh_period_cycles = refresh_period_cycles;
    return fisher;
}

DenseNet make_autoencoder(int d, const std::vector<int>& encoder_widths, double dropout_rate,
                          double l1_coeff, double l2_coeff, std::uint64_t seed) {
    if (d < 1) throw ConfigError("autoencoder needs d >= 1");
    if (encoder_widths.empty()) throw ConfigError("autoencoder needs at least one hidden width");
    std::vector<int> widths;
    widths.push_back(d);
    widths.insert(widths.end(), encoder_widths.begin(), encoder_widths.end());
    for (auto it = encoder_widths.rbegin() + 1; it != encoder_widths.rend(); ++it)
        widths.push_back(*it);
    widths.push_back(d);

    DenseNet net;
    net.l1_coeff = l1_coeff;
    net.l2_coeff = l2_coeff;
    Rng rng(derive_seed(seed, "ae-init"));
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
        DenseLayer layer;
        const int fan_in = widths[i];
        const int fan_out = widths[i + 1];
        const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
        layer.weights.resize(fan_out, fan_in);
        for (Eigen::Index r = 0; r < layer.weights.rows(); ++r)
            for (Eigen::Index c = 0; c < layer.weights.cols(); ++c)
                layer.weights(r, c) = scale * (2.0 * uniform01(rng) - 1.0);
        layer.bias = Vector::Zero(fan_out);
        const bool is_output = i + 2 == widths.size();
        layer.activation = is_output ? Activation::Sigmoid : Activation::Relu;
        layer.dropout_rate = is_output ? 0.0 : dropout_rate;
        net.layers.push_back(std::move(layer));
    }
    return net;
}

Matrix forward(const DenseNet& net, const Matrix& rows, bool training, Rng* rng,
               ForwardCache* cache) {
    if (rows.cols() != net.input_dims())
        throw DataError("forward: input width " + std::to_string(rows.cols()) +
                        " does not match net input " + std::to_string(net.input_dims()));
    if (cache) {
        cache->inputs.clear();
        cache->activations.clear();
        cache->masks.clear();
    }
    Matrix x = rows;
    for (const auto& layer : net.layers) {
        if (cache) cache->inputs.push_back(x);
        Matrix z = x * layer.weights.transpose();
        z.rowwise() += layer.bias.transpose();
        Matrix a = apply_activation(z, layer.activation);
        if (cache) cache->activations.push_back(a);
        if (training && layer.dropout_rate > 0.0) {
            if (!rng) throw ConfigError("training forward pass needs an RNG for dropout");
            const double keep = 1.0 - layer.dropout_rate;
            Matrix mask(a.rows(), a.cols());
            for (Eigen::Index r = 0; r < mask.rows(); ++r)
                for (Eigen::Index c = 0; c < mask.cols(); ++c)
                    mask(r, c) = uniform01(*rng) < keep ? 1.0 / keep : 0.0;
            a = a.cwiseProduct(mask);
            if (cache) cache->masks.push_back(std::move(mask));
        } else if (cache) {
            cache->masks.emplace_back();
        }
        x = std::move(a);
    }
    if (cache) cache->output = x;
    return x;
}

LossParts loss_parts(const DenseNet& net, const Matrix& rows, const Matrix& reconstruction,
                     const FisherInfo* fisher) {
    LossParts parts;
    const double m = static_cast<double>(rows.rows());
    parts.mse = (reconstruction - rows).squaredNorm() / m;
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        parts.l1 += net.l1_coeff * net.layers[i].weights.cwiseAbs().sum();
        parts.l2 += net.l2_coeff * net.layers[i].weights.squaredNorm();
    }
    if (fisher) {
        double ewc = 0.0;
        for (std::size_t i = 0; i < net.layers.size(); ++i) {
            ewc += fisher->fisher.weights[i]
                       .cwiseProduct((net.layers[i].weights - fisher->anchor.weights[i])
                                         .cwiseAbs2())
                       .sum();
            ewc += fisher->fisher.bias[i]
                       .cwiseProduct((net.layers[i].bias - fisher->anchor.bias[i]).cwiseAbs2())
                       .sum();
        }
        parts.ewc = 0.5 * fisher->lambda * ewc;
    }
    return parts;
}

ParamSet backward(const DenseNet& net, const Matrix& rows, const ForwardCache& cache,
                  const FisherInfo* fisher, bool include_regularization) {
    ParamSet grads = ParamSet::zeros_like(net);
    const double m = static_cast<double>(rows.rows());
    Matrix delta = 2.0 / m * (cache.output - rows);  // dL/d(output)
    for (int i = static_cast<int>(net.layers.size()) - 1; i >= 0; --i) {
        const auto& layer = net.layers[static_cast<std::size_t>(i)];
        const auto& mask = cache.masks[static_cast<std::size_t>(i)];
        if (mask.size() > 0) delta = delta.cwiseProduct(mask);
        delta = delta.cwiseProduct(
            activation_grad(cache.activations[static_cast<std::size_t>(i)], layer.activation));
        grads.weights[static_cast<std::size_t>(i)] =
            delta.transpose() * cache.inputs[static_cast<std::size_t>(i)];
        grads.bias[static_cast<std::size_t>(i)] = delta.colwise().sum().transpose();
        if (i > 0) delta = delta * layer.weights;
    }
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        const Matrix& w = net.layers[i].weights;
        if (include_regularization) {
            grads.weights[i] += net.l1_coeff * w.unaryExpr([](double v) {
                return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
            });
            grads.weights[i] += 2.0 * net.l2_coeff * w;
        }
        if (fisher) {
            grads.weights[i] += fisher->lambda * fisher->fisher.weights[i].cwiseProduct(
                                    w - fisher->anchor.weights[i]);
            grads.bias[i] += fisher->lambda * fisher->fisher.bias[i].cwiseProduct(
                                 net.layers[i].bias - fisher->anchor.bias[i]);
        }
    }
    return grads;
}

void apply_weight_decay(DenseNet& net, double learning_rate) {
    const double l1_step = learning_rate * net.l1_coeff;
    const double l2_scale = 1.0 - 2.0 * learning_rate * net.l2_coeff;
    if (l1_step == 0.0 && l2_scale == 1.0) return;
    for (auto& layer : net.layers) {
        layer.weights = layer.weights.unaryExpr([&](double v) {
            const double soft = v > 0.0 ? std::max(0.0, v - l1_step)
                                        : std::min(0.0, v + l1_step);
            return soft * l2_scale;
        });
    }
}

void adam_step(DenseNet& net, const ParamSet& grads, AdamState& adam) {
    ++adam.step;
    const double bc1 = 1.0 - std::pow(adam.beta1, static_cast<double>(adam.step));
    const double bc2 = 1.0 - std::pow(adam.beta2, static_cast<double>(adam.step));
    auto update = [&](auto& param, auto& m_acc, auto& v_acc, const auto& g) {
        m_acc = adam.beta1 * m_acc + (1.0 - adam.beta1) * g;
        v_acc = adam.beta2 * v_acc + (1.0 - adam.beta2) * g.cwiseAbs2();
        param.array() -= adam.learning_rate * (m_acc.array() / bc1) /
                         ((v_acc.array() / bc2).sqrt() + adam.epsilon);
    };
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        update(net.layers[i].weights, adam.m.weights[i], adam.v.weights[i], grads.weights[i]);
        update(net.layers[i].bias, adam.m.bias[i], adam.v.bias[i], grads.bias[i]);
    }
}

std::optional<LossParts> backward_and_step(DenseNet& net, const Matrix& rows,
                                           const FisherInfo* fisher, AdamState& adam, Rng& rng,
                                           bool use_dropout) {
    ForwardCache cache;
    forward(net, rows, use_dropout, &rng, &cache);
    LossParts parts = loss_parts(net, rows, cache.output, fisher);
    if (!std::isfinite(parts.total())) {
        std::cerr << "rca: training step aborted, non-finite loss (mse=" << parts.mse
                  << " ewc=" << parts.ewc << " l1=" << parts.l1 << " l2=" << parts.l2 << ")\n";
        return std::nullopt;
    }
    ParamSet grads = backward(net, rows, cache, fisher, false);
    adam_step(net, grads, adam);
    apply_weight_decay(net, adam.learning_rate);
    return parts;
}

FisherInfo compute_fisher(const DenseNet& net, const Matrix& sample_rows, double lambda,
                          int refresh_period_cycles) {
    if (sample_rows.rows() < 1) throw DataError("compute_fisher needs at least one sample row");
    FisherInfo out = FisherInfo::init(net, lambda, refresh_period_cycles);
    DenseNet plain = net;  // gradient of the reconstruction term only
    plain.l1_coeff = 0.0;
    plain.l2_coeff = 0.0;
    for (Eigen::Index r = 0; r < sample_rows.rows(); ++r) {
        ForwardCache cache;
        forward(plain, sample_rows.row(r), false, nullptr, &cache);
        ParamSet g = backward(plain, sample_rows.row(r), cache, nullptr);
        for (std::size_t i = 0; i < out.fisher.weights.size(); ++i) {
            out.fisher.weights[i] += g.weights[i].cwiseAbs2();
            out.fisher.bias[i] += g.bias[i].cwiseAbs2();
        }
    }
    const double inv = 1.0 / static_cast<double>(sample_rows.rows());
    for (std::size_t i = 0; i < out.fisher.weights.size(); ++i) {
        out.fisher.weights[i] *= inv;
        out.fisher.bias[i] *= inv;
    }
    return out;
}

Iae::Iae(int d, IaeConfig config)
    : config_(std::move(config)),
      net_(make_autoencoder(d, config_.encoder_widths, config_.dropout_rate, config_.l1_coeff,
                            config_.l2_coeff, config_.seed)),
      adam_(AdamState::init(net_, config_.learning_rate)),
      fisher_(FisherInfo::init(net_, config_.lambda_ewc, config_.fisher_period_cycles)),
      rng_(derive_seed(config_.seed, "iae-train")) {}

std::size_t Iae::replay_sample_count(std::size_t buffer_len) {
    return std::min(buffer_len / 8 + 3, buffer_len);
}

void Iae::train_epochs(const Matrix& rows, int epochs) {
    const Eigen::Index n = rows.rows();
    if (n == 0) return;
    const Eigen::Index mb = std::max<Eigen::Index>(1, config_.minibatch_rows);
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    for (int e = 0; e < epochs; ++e) {
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[uniform_index(rng_, i)]);
        for (Eigen::Index start = 0; start < n; start += mb) {
            const Eigen::Index count = std::min(mb, n - start);
            Matrix chunk(count, rows.cols());
            for (Eigen::Index k = 0; k < count; ++k)
                chunk.row(k) = rows.row(order[static_cast<std::size_t>(start + k)]);
            backward_and_step(net_, chunk, &fisher_, adam_, rng_, true);
        }
    }
}

void Iae::train_batch(const CycleBatch& batch) {
    train_epochs(batch.stacked, config_.epochs_per_batch);

    replay_.push_back(batch.stacked);
    while (replay_.size() > config_.replay_capacity) replay_.pop_front();

    ++batches_seen_;
    if (config_.replay_period_batches > 0 &&
        batches_seen_ % config_.replay_period_batches == 0) {
        const std::size_t len = replay_.size();
        const std::size_t want = replay_sample_count(len);
        std::vector<std::size_t> idx(len);
        std::iota(idx.begin(), idx.end(), 0);
        for (std::size_t i = 0; i < want; ++i)
            std::swap(idx[i], idx[i + uniform_index(rng_, len - i)]);
        idx.resize(want);
        for (int e = 0; e < config_.epochs_per_replay; ++e)
            for (std::size_t i : idx) train_epochs(replay_[i], 1);
    }

    const long before = cycles_seen_;
    cycles_seen_ += static_cast<long>(batch.cycles.size());
    if (config_.fisher_period_cycles > 0 &&
        cycles_seen_ / config_.fisher_period_cycles > before / config_.fisher_period_cycles) {
        fisher_ = compute_fisher(net_, batch.stacked, config_.lambda_ewc,
                                 config_.fisher_period_cycles);
        ++fisher_refreshes_;
    }
}

Vector Iae::reconstruction_error_per_feature(const Matrix& rows) const {
    Matrix recon = forward(net_, rows, false, nullptr);
    Matrix sq = (recon - rows).cwiseAbs2();
    if (config_.score_with_max) return sq.colwise().maxCoeff().transpose();
    return sq.colwise().mean().transpose();
}

double Iae::mean_reconstruction_error(const Matrix& rows) const {
    Matrix recon = forward(net_, rows, false, nullptr);
    return (recon - rows).squaredNorm() / static_cast<double>(rows.rows());
}

CycleScore Iae::score_cycle(const CycleSeries& cycle, const SelectionPolicy& policy) const {
    CycleScore result;
    result.scores.cycle_id = cycle.cycle_id;
    result.scores.per_feature = reconstruction_error_per_feature(cycle.matrix);
    const int d = static_cast<int>(result.scores.per_feature.size());
    const int t = std::max(1, static_cast<int>(std::llround(policy.frac_i1 * d)));
    result.i1a = select_top_fraction(result.scores.per_feature, policy.frac_i1);
    result.i1b = select_next_block(result.scores.per_feature, t, t);
    return result;
}

void Iae::save(std::ostream& out) const {
    nlohmann::json doc;
    doc["format"] = "rca-iae-checkpoint";
    doc["version"] = 1;
    nlohmann::json cfg;
    cfg["encoder_widths"] = config_.encoder_widths;
    cfg["dropout_rate"] = config_.dropout_rate;
    cfg["l1_coeff"] = config_.l1_coeff;
    cfg["l2_coeff"] = config_.l2_coeff;
    cfg["learning_rate"] = config_.learning_rate;
    cfg["lambda_ewc"] = config_.lambda_ewc;
    cfg["fisher_period_cycles"] = config_.fisher_period_cycles;
    cfg["replay_period_batches"] = config_.replay_period_batches;
    cfg["replay_capacity"] = config_.replay_capacity;
    cfg["epochs_per_batch"] = config_.epochs_per_batch;
    cfg["epochs_per_replay"] = config_.epochs_per_replay;
    cfg["minibatch_rows"] = config_.minibatch_rows;
    cfg["score_with_max"] = config_.score_with_max;
    cfg["seed"] = config_.seed;
    doc["config"] = cfg;
    doc["input_dims"] = net_.input_dims();

    nlohmann::json layers = nlohmann::json::array();
    for (const auto& layer : net_.layers) {
        nlohmann::json lj;
        lj["weights"] = matrix_to_json(layer.weights);
        lj["bias"] = vector_to_json(layer.bias);
        lj["activation"] = activation_name(layer.activation);
        lj["dropout_rate"] = layer.dropout_rate;
        layers.push_back(std::move(lj));
    }
    doc["layers"] = layers;

    doc["adam"] = {{"m", paramset_to_json(adam_.m)},
                   {"v", paramset_to_json(adam_.v)},
                   {"step", adam_.step},
                   {"learning_rate", adam_.learning_rate},
                   {"beta1", adam_.beta1},
                   {"beta2", adam_.beta2},
                   {"epsilon", adam_.epsilon}};
    doc["fisher"] = {{"fisher", paramset_to_json(fisher_.fisher)},
                     {"anchor", paramset_to_json(fisher_.anchor)},
                     {"lambda", fisher_.lambda},
                     {"refresh_period_cycles", fisher_.refresh_period_cycles}};

    nlohmann::json replay = nlohmann::json::array();
    for (const auto& m : replay_) replay.push_back(matrix_to_json(m));
    doc["replay"] = replay;
    doc["batches_seen"] = batches_seen_;
    doc["cycles_seen"] = cycles_seen_;
    doc["fisher_refreshes"] = fisher_refreshes_;
    std::ostringstream rng_text;
    rng_text << rng_;
    doc["rng_state"] = rng_text.str();

    out << doc.dump() << '\n';
}

void Iae::save_file(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write checkpoint '" + path + "'");
    save(out);
}

Iae Iae::load(std::istream& in) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("invalid checkpoint: ") + e.what());
    }
    if (doc.value("format", "") != "rca-iae-checkpoint" || doc.value("version", 0) != 1)
        throw DataError("unsupported checkpoint format/version");

    const auto& cfg = doc.at("config");
    IaeConfig config;
    config.encoder_widths = cfg.at("encoder_widths").get<std::vector<int>>();
    config.dropout_rate = cfg.at("dropout_rate").get<double>();
    config.l1_coeff = cfg.at("l1_coeff").get<double>();
    config.l2_coeff = cfg.at("l2_coeff").get<double>();
    config.learning_rate = cfg.at("learning_rate").get<double>();
    config.lambda_ewc = cfg.at("lambda_ewc").get<double>();
    config.fisher_period_cycles = cfg.at("fisher_period_cycles").get<int>();
    config.replay_period_batches = cfg.at("replay_period_batches").get<int>();
    config.replay_capacity = cfg.at("replay_capacity").get<std::size_t>();
    config.epochs_per_batch = cfg.at("epochs_per_batch").get<int>();
    config.epochs_per_replay = cfg.at("epochs_per_replay").get<int>();
    config.minibatch_rows = cfg.at("minibatch_rows").get<int>();
    config.score_with_max = cfg.at("score_with_max").get<bool>();
    config.seed = cfg.at("seed").get<std::uint64_t>();

    Iae iae(doc.at("input_dims").get<int>(), config);
    iae.net_.layers.clear();
    for (const auto& lj : doc.at("layers")) {
        DenseLayer layer;
        layer.weights = matrix_from_json(lj.at("weights"));
        layer.bias = vector_from_json(lj.at("bias"));
        layer.activation = activation_from_name(lj.at("activation").get<std::string>());
        layer.dropout_rate = lj.at("dropout_rate").get<double>();
        iae.net_.layers.push_back(std::move(layer));
    }
    const auto& aj = doc.at("adam");
    iae.adam_.m = paramset_from_json(aj.at("m"));
    iae.adam_.v = paramset_from_json(aj.at("v"));
    iae.adam_.step = aj.at("step").get<long>();
    iae.adam_.learning_rate = aj.at("learning_rate").get<double>();
    iae.adam_.beta1 = aj.at("beta1").get<double>();
    iae.adam_.beta2 = aj.at("beta2").get<double>();
    iae.adam_.epsilon = aj.at("epsilon").get<double>();
    const auto& fj = doc.at("fisher");
    iae.fisher_.fisher = paramset_from_json(fj.at("fisher"));
    iae.fisher_.anchor = paramset_from_json(fj.at("anchor"));
    iae.fisher_.lambda = fj.at("lambda").get<double>();
    iae.fisher_.refresh_period_cycles = fj.at("refresh_period_cycles").get<int>();
    iae.replay_.clear();
    for (const auto& mj : doc.at("replay")) iae.replay_.push_back(matrix_from_json(mj));
    iae.batches_seen_ = doc.at("batches_seen").get<long>();
    iae.cycles_seen_ = doc.at("cycles_seen").get<long>();
    iae.fisher_refreshes_ = doc.at("fisher_refreshes").get<long>();
    std::istringstream rng_text(doc.at("rng_state").get<std::string>());
    rng_text >> iae.rng_;
    return iae;
}

Iae Iae::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open checkpoint '" + path + "'");
    return load(in);
}

}  // namespace rca
