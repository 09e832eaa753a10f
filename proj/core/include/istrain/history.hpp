#pragma once

#include <cstdint>
#include <deque>
#include <string>
#include <vector>

#include "istrain/common.hpp"
#include "istrain/nn.hpp"

namespace istrain {

/// Per-sample ring buffers of (iteration, loss) observations; each sample
/// keeps its most recent `window` entries in arrival order.
class HistoryStore {
public:
    struct Observation {
        std::uint64_t iteration;
        double loss;
    };

    explicit HistoryStore(std::size_t num_samples, std::size_t window = 10)
        : window_(window), buffers_(num_samples) {}

    void record_loss(std::size_t sample, std::uint64_t iteration, double loss);

    /// Recorded losses for a sample, oldest first; empty when never seen.
    std::vector<double> loss_history(std::size_t sample) const;

    const std::deque<Observation>& observations(std::size_t sample) const;

    std::size_t window() const { return window_; }
    std::size_t num_samples() const { return buffers_.size(); }
    std::uint64_t total_observations() const { return total_; }

private:
    std::size_t window_;
    std::uint64_t total_ = 0;
    std::vector<std::deque<Observation>> buffers_;
};

/// Parameters of the importance approximator: an LSTM over the loss history
/// concatenated with a class embedding, fed to a scalar linear head.
struct ApproxParams {
    LstmParams lstm;            // input_size 1
    EmbeddingParams embedding;  // num_classes x embed_dim
    std::vector<double> head_weight;  // hidden_size + embed_dim
    double head_bias = 0.0;

    std::size_t param_count() const;
    void flatten(std::vector<double>& out) const;
    void unflatten(std::span<const double> flat);

    static ApproxParams random(std::size_t num_classes, Rng& rng, std::size_t lstm_hidden = 32,
                               std::size_t embed_dim = 32);
};

/// Unclamped regressor output for one sample. Ignores the cold-start rule.
double predict_raw(const ApproxParams& params, std::size_t sample, std::size_t cls,
                   const HistoryStore& store);

/// Importance score: the EMA mean loss when the sample has no history,
/// otherwise the regressor output clamped to [0, inf).
double predict_importance(const ApproxParams& params, std::size_t sample, std::size_t cls,
                          const HistoryStore& store, double ema_mean_loss);

struct ApproxObservation {
    std::size_t sample;
    std::size_t cls;
    double true_loss;
};

/// One optimizer step on the mean squared error between unclamped
/// predictions and the observed losses. Returns the pre-step MSE.
double approx_train_step(ApproxParams& params, std::span<const ApproxObservation> observations,
                         const HistoryStore& store, OptimizerState& state);

/// Flat gradient of the observation MSE in ApproxParams::flatten order.
/// Exposed for gradient checking.
std::vector<double> approx_loss_gradient(const ApproxParams& params,
                                         std::span<const ApproxObservation> observations,
                                         const HistoryStore& store, double* mse_out = nullptr);

/// Little-endian binary checkpoint: header with dims, then parameters in
/// declaration order.
void save_approx_checkpoint(const ApproxParams& params, const std::string& path);
ApproxParams load_approx_checkpoint(const std::string& path);

}  // namespace istrain
