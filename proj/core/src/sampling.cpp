#include "istrain/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace istrain {

std::vector<std::size_t> presample_pool(std::size_t dataset_size, std::size_t pool_size, Rng& rng) {
    if (dataset_size == 0) throw ShapeError("presample_pool: empty dataset");
    if (pool_size == 0) throw ShapeError("presample_pool: pool_size must be >= 1");
    std::size_t take = std::min(pool_size, dataset_size);

    // partial Fisher-Yates: first `take` entries are a uniform sample
    // without replacement
    std::vector<std::size_t> idx(dataset_size);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = 0; i < take; ++i) {
        std::size_t j = i + rng.next_index(dataset_size - i);
        std::swap(idx[i], idx[j]);
    }
    idx.resize(take);
    return idx;
}

ImportanceDistribution build_distribution(std::vector<std::size_t> pool,
                                          std::vector<double> raw_scores, double smoothing_c) {
    if (pool.size() != raw_scores.size())
        throw ShapeError("build_distribution: scores not aligned with pool");
    if (pool.empty()) throw ShapeError("build_distribution: empty pool");
    if (smoothing_c < 0.0) throw ConfigError("build_distribution: smoothing_c must be >= 0");
    for (double s : raw_scores) {
        if (!std::isfinite(s) || s < 0.0)
            throw NumericError("build_distribution: scores must be finite and >= 0", 0);
    }

    double total = 0.0;
    for (double s : raw_scores) total += s + smoothing_c;
    if (total <= 0.0)
        throw NumericError(
            "build_distribution: degenerate distribution (all scores zero, c = 0); smoothing "
            "required",
            0);

    ImportanceDistribution dist;
    dist.pool = std::move(pool);
    dist.raw_scores = std::move(raw_scores);
    dist.smoothing_c = smoothing_c;
    dist.probs.resize(dist.raw_scores.size());
    dist.cumulative.resize(dist.raw_scores.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < dist.raw_scores.size(); ++i) {
        dist.probs[i] = (dist.raw_scores[i] + smoothing_c) / total;
        acc += dist.probs[i];
        dist.cumulative[i] = acc;
    }
    dist.cumulative.back() = 1.0;
    return dist;
}

double adaptive_smoothing_constant(double ema_mean_loss) {
    if (ema_mean_loss < 0.0)
        throw NumericError("adaptive_smoothing_constant: ema must be >= 0", 0);
    return ema_mean_loss / 2.0;
}

std::vector<double> biased_weights(const ImportanceDistribution& dist,
                                   std::span<const std::size_t> chosen, BiasExponent k,
                                   std::size_t normalizer_n) {
    double n = static_cast<double>(normalizer_n == 0 ? dist.size() : normalizer_n);
    std::vector<double> alpha(chosen.size());
    for (std::size_t i = 0; i < chosen.size(); ++i) {
        if (chosen[i] >= dist.size()) throw IndexError("biased_weights: chosen index out of range");
        double p = dist.probs[chosen[i]];
        if (p <= 0.0 && k.k > 0.0)
            throw NumericError("biased_weights: zero probability at chosen index", chosen[i]);
        alpha[i] = 1.0 / (n * std::pow(p, k.k));
        if (!std::isfinite(alpha[i]) || alpha[i] <= 0.0)
            throw NumericError("biased_weights: non-finite weight", chosen[i]);
    }
    return alpha;
}

std::vector<std::size_t> sample_batch(const ImportanceDistribution& dist, std::size_t batch_size,
                                      Rng& rng) {
    if (batch_size == 0) throw ShapeError("sample_batch: batch_size must be >= 1");
    if (dist.cumulative.empty()) throw ShapeError("sample_batch: empty distribution");
    std::vector<std::size_t> positions(batch_size);
    for (std::size_t i = 0; i < batch_size; ++i) {
        double u = rng.next_double();
        auto it = std::upper_bound(dist.cumulative.begin(), dist.cumulative.end(), u);
        if (it == dist.cumulative.end()) it = dist.cumulative.end() - 1;
        positions[i] = static_cast<std::size_t>(it - dist.cumulative.begin());
    }
    return positions;
}

}  // namespace istrain
