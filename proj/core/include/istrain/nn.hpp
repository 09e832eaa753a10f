#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "istrain/common.hpp"
#include "istrain/rng.hpp"

namespace istrain {

enum class Activation { Relu, Identity };

enum class LossKind { Nll, Mse };

struct DenseLayer {
    Matrix weight;             // out x in
    std::vector<double> bias;  // out
    Activation activation = Activation::Relu;
    double dropout_rate = 0.0;
};

/// Fully connected network parameters. Layers chain: layer l's input size
/// equals layer l-1's output size.
struct MlpParams {
    std::vector<DenseLayer> layers;

    std::size_t input_size() const;
    std::size_t output_size() const;
    std::size_t param_count() const;
    void flatten(std::vector<double>& out) const;
    void unflatten(std::span<const double> flat);

    /// Glorot-uniform initialization, layer dims as {in, h1, ..., out}.
    /// Hidden layers get ReLU + the given dropout rate, the output layer
    /// is linear with no dropout.
    static MlpParams random(const std::vector<std::size_t>& dims, double dropout, Rng& rng);
};

/// Standard LSTM cell parameters: four gates, each with an input weight,
/// a recurrent weight and a bias.
struct LstmParams {
    std::size_t input_size = 0;
    std::size_t hidden_size = 0;
    // order: input, forget, output, candidate
    Matrix w_i, u_i;
    std::vector<double> b_i;
    Matrix w_f, u_f;
    std::vector<double> b_f;
    Matrix w_o, u_o;
    std::vector<double> b_o;
    Matrix w_g, u_g;
    std::vector<double> b_g;

    std::size_t param_count() const;
    void flatten(std::vector<double>& out) const;
    void unflatten(std::span<const double> flat);

    static LstmParams random(std::size_t input_size, std::size_t hidden_size, Rng& rng);
};

struct EmbeddingParams {
    Matrix table;  // num_classes x embed_dim

    std::size_t param_count() const { return table.size(); }

    static EmbeddingParams random(std::size_t num_classes, std::size_t embed_dim, Rng& rng);
};

struct OptimizerState {
    enum class Kind { Sgd, Adam };

    Kind kind = Kind::Sgd;
    double learning_rate = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::uint64_t step = 0;
    std::vector<double> m;  // first moment, sized on first adam step
    std::vector<double> v;  // second moment

    static OptimizerState sgd(double lr);
    static OptimizerState adam(double lr, double beta1 = 0.9, double beta2 = 0.999,
                               double eps = 1e-8);
};

/// One training sample: input features plus either a class label (NLL)
/// or a regression target (MSE).
struct TrainSample {
    std::span<const double> input;
    int label = -1;
    std::span<const double> target;
};

struct GradBundle {
    std::vector<double> per_sample_losses;  // unweighted
    std::vector<double> gradient;           // flattened mean of weighted per-sample grads
    std::vector<double> weights;            // the alpha applied during accumulation
};

// ---- forward / backward ----

/// Forward pass. When dropout_rng is supplied the pass runs in training mode
/// with inverted-dropout masks; without it the pass is deterministic
/// evaluation mode.
std::vector<double> mlp_forward(const MlpParams& params, std::span<const double> x,
                                Rng* dropout_rng = nullptr);

double loss_nll(std::span<const double> logits, std::size_t cls);
double loss_mse(std::span<const double> pred, std::span<const double> target);

/// Gradient of the loss with respect to its direct argument (logits for NLL,
/// prediction for MSE). Used by the appendix ordering diagnostics.
std::vector<double> loss_nll_grad_wrt_probs(std::span<const double> probs, std::size_t cls);
std::vector<double> loss_mse_grad(std::span<const double> pred, std::span<const double> target);

std::vector<double> softmax(std::span<const double> logits);

/// Weighted mini-batch backward pass:
///   gradient = (1/|batch|) sum_i alpha_i * grad of L(Psi(x_i), y_i)
/// Dropout masks are shared between the loss-producing forward and the
/// backward pass. When per_sample_weighted_grads is non-null it receives
/// each alpha_i * grad_i individually (for variance instrumentation).
GradBundle backward(const MlpParams& params, LossKind loss, std::span<const TrainSample> batch,
                    std::span<const double> weights, Rng* dropout_rng = nullptr,
                    std::vector<std::vector<double>>* per_sample_weighted_grads = nullptr);

/// Euclidean norm of the single-sample gradient, dropout disabled.
double per_sample_grad_norm(const MlpParams& params, LossKind loss, const TrainSample& sample);

// ---- LSTM ----

struct LstmCache {
    std::vector<std::vector<double>> inputs;
    std::vector<std::vector<double>> gate_i, gate_f, gate_o, gate_g;
    std::vector<std::vector<double>> cell, hidden, tanh_cell;
};

/// Runs the recurrence from zero (h, c); returns the final hidden state.
/// An empty sequence maps to the zero state.
std::vector<double> lstm_forward(const LstmParams& params,
                                 std::span<const std::vector<double>> sequence,
                                 LstmCache* cache = nullptr);

/// Backprop through time given d(final hidden state). Returns the flat
/// parameter gradient in LstmParams::flatten order.
std::vector<double> lstm_backward(const LstmParams& params, const LstmCache& cache,
                                  std::span<const double> d_hidden);

std::span<const double> embed(const EmbeddingParams& params, std::size_t cls);

// ---- optimizer steps ----

void sgd_step(std::vector<double>& params, std::span<const double> grad, OptimizerState& state);
void adam_step(std::vector<double>& params, std::span<const double> grad, OptimizerState& state);

/// Dispatches on state.kind.
void optimizer_step(std::vector<double>& params, std::span<const double> grad,
                    OptimizerState& state);

}  // namespace istrain
