#include "istrain/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "istrain/analysis.hpp"

namespace istrain {

const char* strategy_name(Strategy s) {
    switch (s) {
        case Strategy::Uniform: return "uniform";
        case Strategy::Loss: return "loss";
        case Strategy::Gnorm: return "gnorm";
        case Strategy::Approx: return "approx";
    }
    return "unknown";
}

std::optional<Strategy> strategy_from_name(const std::string& name) {
    if (name == "uniform") return Strategy::Uniform;
    if (name == "loss") return Strategy::Loss;
    if (name == "gnorm") return Strategy::Gnorm;
    if (name == "approx") return Strategy::Approx;
    return std::nullopt;
}

void ema_update(EmaTracker& tracker, double batch_mean_loss) {
    if (!(tracker.decay > 0.0 && tracker.decay < 1.0))
        throw ConfigError("ema_update: decay must be in (0, 1)");
    if (!tracker.initialized) {
        tracker.value = batch_mean_loss;
        tracker.initialized = true;
    } else {
        tracker.value = tracker.decay * tracker.value + (1.0 - tracker.decay) * batch_mean_loss;
    }
}

double grad_variance_trace(const std::vector<std::vector<double>>& grads) {
    if (grads.size() < 2) throw ShapeError("grad_variance_trace: need at least 2 gradients");
    std::size_t dim = grads[0].size();
    for (const auto& g : grads) {
        if (g.size() != dim) throw ShapeError("grad_variance_trace: gradient length mismatch");
    }
    std::vector<double> center(dim, 0.0);
    double inv_n = 1.0 / static_cast<double>(grads.size());
    for (const auto& g : grads) {
        for (std::size_t j = 0; j < dim; ++j) center[j] += inv_n * g[j];
    }
    double trace = 0.0;
    for (const auto& g : grads) {
        double s = 0.0;
        for (std::size_t j = 0; j < dim; ++j) {
            double d = g[j] - center[j];
            s += d * d;
        }
        trace += inv_n * s;
    }
    return trace;
}

TrainSample dataset_sample(const Dataset& dataset, std::size_t index) {
    TrainSample s;
    s.input = dataset.features.row(index);
    if (dataset.is_classification()) {
        s.label = dataset.labels[index];
    } else {
        s.target = dataset.targets.row(index);
    }
    return s;
}

double sample_loss(const MlpParams& params, LossKind loss, const Dataset& dataset,
                   std::size_t index) {
    TrainSample s = dataset_sample(dataset, index);
    std::vector<double> out = mlp_forward(params, s.input);
    if (loss == LossKind::Nll) return loss_nll(out, static_cast<std::size_t>(s.label));
    return loss_mse(out, s.target);
}

double max_loss_sweep(const MlpParams& params, LossKind loss, const Dataset& dataset) {
    double max_loss = 0.0;
    for (std::size_t i = 0; i < dataset.size(); ++i)
        max_loss = std::max(max_loss, sample_loss(params, loss, dataset, i));
    return max_loss;
}

namespace {

std::vector<double> score_pool(const TrainConfig& cfg, const MlpParams& model,
                               const std::optional<ApproxParams>& approx,
                               const HistoryStore* store, const Dataset& dataset,
                               std::span<const std::size_t> pool, double ema_value) {
    std::vector<double> scores(pool.size());
    switch (cfg.strategy) {
        case Strategy::Uniform:
            std::fill(scores.begin(), scores.end(), 1.0);
            break;
        case Strategy::Loss:
            for (std::size_t i = 0; i < pool.size(); ++i)
                scores[i] = sample_loss(model, cfg.loss, dataset, pool[i]);
            break;
        case Strategy::Gnorm:
            for (std::size_t i = 0; i < pool.size(); ++i)
                scores[i] = per_sample_grad_norm(model, cfg.loss, dataset_sample(dataset, pool[i]));
            break;
        case Strategy::Approx:
            for (std::size_t i = 0; i < pool.size(); ++i) {
                scores[i] = predict_importance(
                    *approx, pool[i], static_cast<std::size_t>(dataset.labels[pool[i]]), *store,
                    ema_value);
            }
            break;
    }
    return scores;
}

OptimizerState make_optimizer(OptimizerState::Kind kind, double lr) {
    return kind == OptimizerState::Kind::Sgd ? OptimizerState::sgd(lr) : OptimizerState::adam(lr);
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const Dataset& dataset, Rng& rng) {
    if (dataset.size() == 0) throw ShapeError("train: empty dataset");
    if (cfg.batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (!(cfg.k <= 1.0)) throw ConfigError("train: k must satisfy k <= 1");
    if (cfg.strategy == Strategy::Approx && !dataset.is_classification())
        throw ConfigError("train: approx strategy needs class labels");
    BiasExponent k(cfg.k);

    std::size_t n = dataset.size();
    std::size_t pool_size = std::max(
        cfg.batch_size,
        static_cast<std::size_t>(std::llround(cfg.pool_factor * static_cast<double>(cfg.batch_size))));

    std::size_t out_dim =
        dataset.is_classification() ? dataset.num_classes : dataset.targets.cols;
    std::vector<std::size_t> dims;
    dims.push_back(dataset.dims());
    dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
    dims.push_back(out_dim);

    TrainResult result;
    result.model = MlpParams::random(dims, cfg.dropout, rng);
    OptimizerState model_opt = make_optimizer(cfg.optimizer, cfg.learning_rate);
    OptimizerState approx_opt = make_optimizer(cfg.optimizer, cfg.approx_learning_rate);

    HistoryStore store(n, cfg.history_window);
    if (cfg.strategy == Strategy::Approx) {
        result.approx =
            ApproxParams::random(dataset.num_classes, rng, cfg.lstm_hidden, cfg.embed_dim);
    }

    EmaTracker ema{cfg.ema_decay};
    bool has_dropout = cfg.dropout > 0.0;
    std::vector<double> flat_model;
    std::vector<std::vector<double>> per_grads;

    for (std::uint64_t t = 0; t < cfg.iterations; ++t) {
        auto t0 = std::chrono::steady_clock::now();

        std::vector<std::size_t> pool = presample_pool(n, pool_size, rng);
        std::vector<double> scores =
            score_pool(cfg, result.model, result.approx, &store, dataset, pool,
                       ema.initialized ? ema.value : 0.0);

        // smoothing is a no-op on the uniform strategy's constant scores;
        // keeping c = 0 there preserves exactly uniform probabilities
        double c = 0.0;
        if (cfg.strategy != Strategy::Uniform) {
            c = cfg.smoothing.mode == Smoothing::Mode::Adaptive
                    ? adaptive_smoothing_constant(ema.initialized ? ema.value : 0.0)
                    : cfg.smoothing.constant;
        }

        // a fully zero score vector with c = 0 (cold start) falls back to uniform
        double total = c * static_cast<double>(scores.size());
        for (double s : scores) total += s;
        if (total <= 0.0) std::fill(scores.begin(), scores.end(), 1.0);

        ImportanceDistribution dist = build_distribution(std::move(pool), std::move(scores), c);
        std::vector<std::size_t> chosen = sample_batch(dist, cfg.batch_size, rng);
        std::vector<double> alpha =
            biased_weights(dist, chosen, k, cfg.normalize_by_dataset_size ? n : 0);

        std::vector<TrainSample> batch;
        batch.reserve(chosen.size());
        for (std::size_t pos : chosen) batch.push_back(dataset_sample(dataset, dist.pool[pos]));

        GradBundle bundle;
        try {
            bundle = backward(result.model, cfg.loss, batch, alpha,
                              has_dropout ? &rng : nullptr, &per_grads);
        } catch (const NumericError& e) {
            result.aborted = true;
            result.abort_iteration = t;
            result.abort_reason = e.what();
            return result;
        }

        result.model.flatten(flat_model);
        optimizer_step(flat_model, bundle.gradient, model_opt);
        result.model.unflatten(flat_model);

        // the approximator predicts forward: train it against this
        // iteration's true losses using the history as of the previous one
        if (cfg.strategy == Strategy::Approx) {
            std::vector<ApproxObservation> obs(chosen.size());
            for (std::size_t j = 0; j < chosen.size(); ++j) {
                std::size_t idx = dist.pool[chosen[j]];
                obs[j] = {idx, static_cast<std::size_t>(dataset.labels[idx]),
                          bundle.per_sample_losses[j]};
            }
            approx_train_step(*result.approx, obs, store, approx_opt);
        }

        for (std::size_t j = 0; j < chosen.size(); ++j)
            store.record_loss(dist.pool[chosen[j]], t, bundle.per_sample_losses[j]);

        // the ema estimates the mean training loss, so the biased batch is
        // reweighted by 1/(n p) before averaging (exact for uniform draws)
        double norm_n = static_cast<double>(cfg.normalize_by_dataset_size ? n : dist.size());
        double unbiased_mean = 0.0;
        for (std::size_t j = 0; j < chosen.size(); ++j)
            unbiased_mean += bundle.per_sample_losses[j] / (norm_n * dist.probs[chosen[j]]);
        unbiased_mean /= static_cast<double>(chosen.size());
        ema_update(ema, unbiased_mean);

        double batch_mean = mean(bundle.per_sample_losses);

        MetricsRecord rec;
        rec.iteration = t;
        rec.epoch = static_cast<double>((t + 1) * cfg.batch_size) / static_cast<double>(n);
        rec.batch_mean_loss = batch_mean;
        rec.ema_loss = ema.value;
        rec.smoothing_c_used = c;
        if (per_grads.size() >= 2) rec.grad_variance_trace = grad_variance_trace(per_grads);
        if (chosen.size() >= 2) {
            std::vector<double> chosen_scores(chosen.size());
            for (std::size_t j = 0; j < chosen.size(); ++j)
                chosen_scores[j] = dist.raw_scores[chosen[j]];
            TrackingFit fit = tracking_coefficients(chosen_scores, bundle.per_sample_losses);
            rec.tracking_a = fit.a;
            rec.tracking_b = fit.b;
        }
        if (cfg.max_loss_sweep_interval > 0 && (t + 1) % cfg.max_loss_sweep_interval == 0)
            rec.max_train_loss = max_loss_sweep(result.model, cfg.loss, dataset);
        if (cfg.record_timing) {
            auto t1 = std::chrono::steady_clock::now();
            rec.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
        }
        result.metrics.push_back(std::move(rec));
    }
    return result;
}

}  // namespace istrain
