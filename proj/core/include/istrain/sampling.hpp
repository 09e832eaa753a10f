#pragma once

#include <cstddef>
#include <vector>

#include "istrain/common.hpp"
#include "istrain/rng.hpp"

namespace istrain {

/// Exponent of the biased correction weights alpha_i = 1/(n * p_i^k).
/// k = 1 is the unbiased estimator; k < 1 biases toward high-score samples.
struct BiasExponent {
    double k = 0.5;

    explicit BiasExponent(double k_) : k(k_) {
        if (!(k <= 1.0)) throw ConfigError("bias exponent k must satisfy k <= 1");
    }

    /// Negative k amplifies high-gradient samples and makes training noisy.
    bool flagged_negative() const { return k < 0.0; }
};

/// Additively smoothed sampling distribution over a candidate pool.
struct ImportanceDistribution {
    std::vector<std::size_t> pool;    // dataset indices
    std::vector<double> raw_scores;   // aligned to pool
    double smoothing_c = 0.0;
    std::vector<double> probs;
    std::vector<double> cumulative;   // prefix sums of probs, for inverse-CDF draws

    std::size_t size() const { return pool.size(); }
};

/// Uniform sample of min(pool_size, dataset_size) distinct indices.
std::vector<std::size_t> presample_pool(std::size_t dataset_size, std::size_t pool_size, Rng& rng);

/// probs_i = (raw_scores_i + c) / sum_j (raw_scores_j + c).
ImportanceDistribution build_distribution(std::vector<std::size_t> pool,
                                          std::vector<double> raw_scores, double smoothing_c);

/// The adaptive smoothing constant: half the EMA of the mean training loss.
double adaptive_smoothing_constant(double ema_mean_loss);

/// alpha_i = 1 / (n * p_i^k), n defaulting to the pool size. Passing
/// normalizer_n overrides n (e.g. the dataset size for strict Eq-8 form).
std::vector<double> biased_weights(const ImportanceDistribution& dist,
                                   std::span<const std::size_t> chosen, BiasExponent k,
                                   std::size_t normalizer_n = 0);

/// batch_size independent multinomial draws (positions into dist.pool),
/// with replacement, via binary search on the prefix sums.
std::vector<std::size_t> sample_batch(const ImportanceDistribution& dist, std::size_t batch_size,
                                      Rng& rng);

}  // namespace istrain
