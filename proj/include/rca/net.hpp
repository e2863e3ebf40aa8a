#pragma once

#include "rca/rng.hpp"
#include "rca/types.hpp"

#include <deque>
#include <iosfwd>
#include <optional>
#include <vector>

namespace rca {

enum class Activation { Relu, Sigmoid, Identity };

struct DenseLayer {
    Matrix weights;  // out x in
    Vector bias;     // out
    Activation activation = Activation::Identity;
    double dropout_rate = 0.0;  // inverted dropout on this layer's output
};

// Minimal dense net; all state is f64 so gradient checks are meaningful.
struct DenseNet {
    std::vector<DenseLayer> layers;
    double l1_coeff = 0.0;
    double l2_coeff = 0.0;

    int input_dims() const { return static_cast<int>(layers.front().weights.cols()); }
    int output_dims() const { return static_cast<int>(layers.back().weights.rows()); }
};

// Symmetric autoencoder d -> widths... -> reversed widths -> d. Hidden layers
// are ReLU with dropout; the output layer is sigmoid. Weights start uniform
// in +-1/sqrt(fan_in).
DenseNet make_autoencoder(int d, const std::vector<int>& encoder_widths, double dropout_rate,
                          double l1_coeff, double l2_coeff, std::uint64_t seed);

struct ForwardCache {
    std::vector<Matrix> inputs;       // input to each layer
    std::vector<Matrix> activations;  // post-activation, pre-dropout
    std::vector<Matrix> masks;        // dropout masks (empty when not training)
    Matrix output;
};

// Per-parameter gradient (or moment / Fisher) storage mirroring the net.
struct ParamSet {
    std::vector<Matrix> weights;
    std::vector<Vector> bias;

    static ParamSet zeros_like(const DenseNet& net);
};

struct AdamState {
    ParamSet m;
    ParamSet v;
    long step = 0;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    static AdamState init(const DenseNet& net, double learning_rate);
};

struct FisherInfo {
    ParamSet fisher;      // diagonal estimates, elementwise >= 0
    ParamSet anchor;      // theta* the EWC penalty pulls toward
    double lambda = 0.4;
    int refresh_period_cycles = 50;

    static FisherInfo init(const DenseNet& net, double lambda, int refresh_period_cycles);
};

struct LossParts {
    double mse = 0.0;
    double ewc = 0.0;
    double l1 = 0.0;
    double l2 = 0.0;
    double total() const { return mse + ewc + l1 + l2; }
};

// Sigmoid output keeps every entry in [0,1]; dropout only fires when
// training is true.
Matrix forward(const DenseNet& net, const Matrix& rows, bool training, Rng* rng,
               ForwardCache* cache = nullptr);

// mse: mean over rows of the squared error summed over features.
// ewc: sum_k lambda/2 * F_k * (theta_k - anchor_k)^2.
LossParts loss_parts(const DenseNet& net, const Matrix& rows, const Matrix& reconstruction,
                     const FisherInfo* fisher);

// Analytic gradient of the full loss (mse + ewc + l1 + l2) for the forward
// pass recorded in `cache`. Training steps pass include_regularization=false
// and apply the penalties as a decoupled proximal update instead: feeding the
// constant-magnitude L1 sign gradient through ADAM's normalizer collapses
// every weight to zero at the 0.01 coefficients.
ParamSet backward(const DenseNet& net, const Matrix& rows, const ForwardCache& cache,
                  const FisherInfo* fisher, bool include_regularization = true);

void adam_step(DenseNet& net, const ParamSet& grads, AdamState& adam);

// Decoupled L1 soft-threshold and L2 shrinkage scaled by the learning rate.
void apply_weight_decay(DenseNet& net, double learning_rate);

// One forward/backward/ADAM step. Returns the loss parts, or nullopt (no
// update applied) if the loss went non-finite.
std::optional<LossParts> backward_and_step(DenseNet& net, const Matrix& rows,
                                           const FisherInfo* fisher, AdamState& adam, Rng& rng,
                                           bool use_dropout = true);

// Diagonal empirical Fisher: per parameter, the mean squared gradient of the
// per-row reconstruction loss. Anchors theta* at the current parameters.
FisherInfo compute_fisher(const DenseNet& net, const Matrix& sample_rows, double lambda,
                          int refresh_period_cycles);

struct FeatureAnomalyScores {
    int cycle_id = 0;
    Vector per_feature;  // length d, entries >= 0
};

struct IaeConfig {
    std::vector<int> encoder_widths{32, 16, 8};
    double dropout_rate = 0.2;
    double l1_coeff = 0.01;
    double l2_coeff = 0.01;
    double learning_rate = 1e-3;
    double lambda_ewc = 0.4;
    int fisher_period_cycles = 50;
    int replay_period_batches = 10;  // 0 disables replay
    std::size_t replay_capacity = 100;
    int epochs_per_batch = 2;
    int epochs_per_replay = 5;
    int minibatch_rows = 8;
    bool score_with_max = false;  // aggregate per-feature error with max instead of mean
    std::uint64_t seed = 1;
};

struct CycleScore {
    FeatureAnomalyScores scores;
    std::vector<int> i1a;
    std::vector<int> i1b;
};

// Incremental autoencoder: batch-by-batch training with EWC and a FIFO
// replay buffer.
class Iae {
public:
    Iae(int d, IaeConfig config);

    // Two epochs on the batch, FIFO append to the replay buffer, a replay
    // iteration every r-th batch, Fisher refresh on the cycle schedule.
    void train_batch(const CycleBatch& batch);

    // Inference-mode reconstruction of one cycle; per-feature squared error
    // aggregated over rows, plus the top-t / next-t evidence sets.
    CycleScore score_cycle(const CycleSeries& cycle, const SelectionPolicy& policy) const;

    Vector reconstruction_error_per_feature(const Matrix& rows) const;
    double mean_reconstruction_error(const Matrix& rows) const;

    const DenseNet& net() const { return net_; }
    const FisherInfo& fisher() const { return fisher_; }
    std::size_t replay_size() const { return replay_.size(); }
    const std::deque<Matrix>& replay_buffer() const { return replay_; }
    long batches_seen() const { return batches_seen_; }
    long cycles_seen() const { return cycles_seen_; }

    // How many replay batches a buffer of the given size contributes:
    // min(len/8 + 3, len).
    static std::size_t replay_sample_count(std::size_t buffer_len);

    void save(std::ostream& out) const;
    void save_file(const std::string& path) const;
    static Iae load(std::istream& in);
    static Iae load_file(const std::string& path);

private:
    void train_epochs(const Matrix& rows, int epochs);

    IaeConfig config_;
    DenseNet net_;
    AdamState adam_;
    FisherInfo fisher_;
    std::deque<Matrix> replay_;
    long batches_seen_ = 0;
    long cycles_seen_ = 0;
    long fisher_refreshes_ = 0;
    Rng rng_;
};

}  // namespace rca
