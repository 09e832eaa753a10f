#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "istrain/dataset.hpp"
#include "istrain/history.hpp"
#include "istrain/nn.hpp"
#include "istrain/sampling.hpp"

namespace istrain {

enum class Strategy { Uniform, Loss, Gnorm, Approx };

const char* strategy_name(Strategy s);
std::optional<Strategy> strategy_from_name(const std::string& name);

struct Smoothing {
    enum class Mode { Adaptive, Constant };
    Mode mode = Mode::Adaptive;
    double constant = 0.5;  // used in Constant mode; the values {0.5, 1, 2.5}
                            // are the documented sweep
};

/// Exponential moving average of mini-batch losses. The first observation
/// initializes the value directly.
struct EmaTracker {
    double decay = 0.99;
    double value = 0.0;
    bool initialized = false;
};

void ema_update(EmaTracker& tracker, double batch_mean_loss);

struct TrainConfig {
    Strategy strategy = Strategy::Loss;
    double k = 0.5;
    std::size_t batch_size = 32;
    double pool_factor = 2.0;  // pool size = round(pool_factor * batch_size)
    Smoothing smoothing;
    double ema_decay = 0.99;
    LossKind loss = LossKind::Nll;
    std::vector<std::size_t> hidden = {16, 16};
    double dropout = 0.0;
    OptimizerState::Kind optimizer = OptimizerState::Kind::Adam;
    double learning_rate = 1e-3;
    double approx_learning_rate = 1e-3;
    std::size_t iterations = 1000;
    std::size_t max_loss_sweep_interval = 300;
    std::size_t history_window = 10;
    std::size_t lstm_hidden = 32;
    std::size_t embed_dim = 32;
    /// When set, alpha normalizes by the dataset size N instead of the pool
    /// size (strict Eq-8 form).
    bool normalize_by_dataset_size = false;
    /// Wall-clock measurement makes run CSVs nondeterministic, so it is opt-in.
    bool record_timing = false;
    std::uint64_t seed = 0;
};

struct MetricsRecord {
    std::uint64_t iteration = 0;
    double epoch = 0.0;
    double wall_ms = 0.0;
    double batch_mean_loss = 0.0;
    double ema_loss = 0.0;
    double grad_variance_trace = 0.0;
    std::optional<double> max_train_loss;
    std::optional<double> tracking_a;
    std::optional<double> tracking_b;
    double smoothing_c_used = 0.0;
};

struct TrainResult {
    std::vector<MetricsRecord> metrics;
    MlpParams model;
    std::optional<ApproxParams> approx;
    bool aborted = false;
    std::uint64_t abort_iteration = 0;
    std::string abort_reason;
};

/// Runs the importance-sampling training loop: per iteration, draw a uniform
/// candidate pool, score it by the configured strategy, resample a mini-batch
/// from the smoothed distribution, apply the bias-corrected weighted update,
/// and (for the approx strategy) fit the loss predictor on the fresh losses.
TrainResult train(const TrainConfig& config, const Dataset& dataset, Rng& rng);

/// Trace of the empirical covariance of the weighted per-sample gradients:
/// mean of ||G_i - mean(G)||^2. Requires at least two gradients.
double grad_variance_trace(const std::vector<std::vector<double>>& per_sample_weighted_grads);

/// Maximum per-sample loss over the full dataset, evaluation mode.
double max_loss_sweep(const MlpParams& params, LossKind loss, const Dataset& dataset);

/// Per-sample evaluation-mode loss of one dataset row.
double sample_loss(const MlpParams& params, LossKind loss, const Dataset& dataset,
                   std::size_t index);

/// Assembles a TrainSample view over a dataset row.
TrainSample dataset_sample(const Dataset& dataset, std::size_t index);

}  // namespace istrain
