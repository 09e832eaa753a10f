#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "istrain/nn.hpp"
#include "istrain/sampling.hpp"
#include "test_util.hpp"

using namespace istrain;
using test_util::cosine_similarity;
using test_util::random_vector;

TEST_CASE("presample_pool basics") {
    Rng rng(1);
    // pool_size >= dataset_size covers all indices exactly once
    auto pool = presample_pool(8, 20, rng);
    std::sort(pool.begin(), pool.end());
    std::vector<std::size_t> all(8);
    std::iota(all.begin(), all.end(), std::size_t{0});
    CHECK(pool == all);

    // determinism: same state, same pools
    Rng a(99), b(99);
    CHECK(presample_pool(100, 10, a) == presample_pool(100, 10, b));

    CHECK_THROWS_AS(presample_pool(0, 4, rng), ShapeError);
}

TEST_CASE("presample_pool single draw is uniform (chi-square)") {
    Rng rng(5);
    const std::size_t n = 10;
    const int draws = 100000;
    std::vector<int> counts(n, 0);
    for (int i = 0; i < draws; ++i) ++counts[presample_pool(n, 1, rng)[0]];
    double expected = static_cast<double>(draws) / n;
    double chi2 = 0.0;
    for (int c : counts) chi2 += (c - expected) * (c - expected) / expected;
    // chi-square critical value, 9 dof, alpha = 0.01
    CHECK(chi2 < 21.666);
}

TEST_CASE("build_distribution") {
    auto d = build_distribution({0, 1, 2, 3}, {1.0, 2.0, 3.0, 4.0}, 0.0);
    CHECK(d.probs == std::vector<double>{0.1, 0.2, 0.3, 0.4});

    auto u = build_distribution({5, 6, 7}, {0.0, 0.0, 0.0}, 1.0);
    for (double p : u.probs) CHECK(p == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

    // adaptive c = mean/2 = 2 on scores (2, 4, 6)
    auto s = build_distribution({0, 1, 2}, {2.0, 4.0, 6.0}, adaptive_smoothing_constant(4.0));
    CHECK(s.probs[0] == doctest::Approx(4.0 / 18.0).epsilon(1e-12));
    CHECK(s.probs[1] == doctest::Approx(6.0 / 18.0).epsilon(1e-12));
    CHECK(s.probs[2] == doctest::Approx(8.0 / 18.0).epsilon(1e-12));

    CHECK_THROWS_AS(build_distribution({0, 1}, {0.0, 0.0}, 0.0), NumericError);
    CHECK_THROWS_AS(build_distribution({0, 1}, {1.0}, 0.0), ShapeError);
}

TEST_CASE("distribution normalization and positivity property") {
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        std::size_t n = 2 + rng.next_index(30);
        std::vector<std::size_t> pool(n);
        std::iota(pool.begin(), pool.end(), std::size_t{0});
        std::vector<double> scores = random_vector(n, rng, 0.0, 5.0);
        double c = rng.next_uniform(0.01, 2.0);
        auto d = build_distribution(pool, scores, c);
        double sum = 0.0;
        for (double p : d.probs) {
            CHECK(p > 0.0);
            sum += p;
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("smoothing interpolates toward uniform") {
    Rng rng(4);
    std::vector<std::size_t> pool = {0, 1, 2, 3, 4};
    std::vector<double> scores = random_vector(5, rng, 0.0, 3.0);

    auto tv_from_uniform = [](const ImportanceDistribution& d) {
        double tv = 0.0;
        double u = 1.0 / static_cast<double>(d.size());
        for (double p : d.probs) tv += std::abs(p - u);
        return 0.5 * tv;
    };

    // c = 0 is exactly score-proportional
    auto d0 = build_distribution(pool, scores, 0.0);
    double total = 0.0;
    for (double s : scores) total += s;
    for (std::size_t i = 0; i < scores.size(); ++i)
        CHECK(d0.probs[i] == doctest::Approx(scores[i] / total).epsilon(1e-12));

    // TV distance from uniform is non-increasing in c, and vanishes for huge c
    double prev = tv_from_uniform(d0);
    for (double c : {0.1, 0.5, 1.0, 5.0, 50.0, 5000.0}) {
        double tv = tv_from_uniform(build_distribution(pool, scores, c));
        CHECK(tv <= prev + 1e-12);
        prev = tv;
    }
    CHECK(prev < 1e-3);
}

TEST_CASE("adaptive_smoothing_constant") {
    CHECK(adaptive_smoothing_constant(4.0) == 2.0);
    CHECK(adaptive_smoothing_constant(0.0) == 0.0);
    CHECK(adaptive_smoothing_constant(1.6) == doctest::Approx(0.8).epsilon(1e-15));
}

TEST_CASE("biased_weights") {
    std::vector<std::size_t> pool = {0, 1, 2, 3};
    auto uniform = build_distribution(pool, {1.0, 1.0, 1.0, 1.0}, 0.0);
    std::vector<std::size_t> chosen = {0, 1, 2, 3};

    for (double a : biased_weights(uniform, chosen, BiasExponent(1.0))) {
        CHECK(a == doctest::Approx(1.0).epsilon(1e-12));
    }

    auto skew = build_distribution(pool, {1.0, 2.0, 3.0, 4.0}, 0.0);
    for (double a : biased_weights(skew, chosen, BiasExponent(0.0))) {
        CHECK(a == doctest::Approx(0.25).epsilon(1e-12));
    }

    auto w = biased_weights(skew, chosen, BiasExponent(1.0));
    CHECK(w[0] == doctest::Approx(2.5).epsilon(1e-12));
    CHECK(w[1] == doctest::Approx(1.25).epsilon(1e-12));
    CHECK(w[2] == doctest::Approx(1.0 / 1.2).epsilon(1e-12));
    CHECK(w[3] == doctest::Approx(0.625).epsilon(1e-12));

    CHECK_THROWS_AS(BiasExponent(1.5), ConfigError);
    CHECK(BiasExponent(-0.5).flagged_negative());
}

TEST_CASE("sample_batch") {
    Rng rng(8);
    auto point = build_distribution({4, 5, 6}, {1.0, 0.0, 0.0}, 0.0);
    for (std::size_t pos : sample_batch(point, 50, rng)) CHECK(pos == 0);

    // Monte-Carlo frequencies within 3 sigma per cell
    auto d = build_distribution({0, 1, 2, 3}, {1.0, 2.0, 3.0, 4.0}, 0.0);
    const int draws = 100000;
    std::vector<int> counts(4, 0);
    for (std::size_t pos : sample_batch(d, draws, rng)) ++counts[pos];
    for (std::size_t i = 0; i < 4; ++i) {
        double p = d.probs[i];
        double mu = draws * p;
        double sigma = std::sqrt(draws * p * (1.0 - p));
        CHECK(std::abs(counts[i] - mu) < 3.0 * sigma);
    }

    Rng a(21), b(21);
    CHECK(sample_batch(d, 32, a) == sample_batch(d, 32, b));
}

TEST_CASE("unbiasedness at k = 1 by enumeration") {
    Rng rng(13);
    for (std::size_t n : {2u, 5u, 16u}) {
        std::vector<std::size_t> pool(n);
        std::iota(pool.begin(), pool.end(), std::size_t{0});
        std::vector<double> scores = random_vector(n, rng, 0.1, 4.0);
        auto d = build_distribution(pool, scores, 0.05);
        std::vector<std::size_t> all(n);
        std::iota(all.begin(), all.end(), std::size_t{0});
        std::vector<double> alpha = biased_weights(d, all, BiasExponent(1.0));

        std::vector<std::vector<double>> grads;
        for (std::size_t i = 0; i < n; ++i) grads.push_back(random_vector(6, rng, -2.0, 2.0));

        std::vector<double> expectation(6, 0.0), mean_grad(6, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < 6; ++j) {
                expectation[j] += d.probs[i] * alpha[i] * grads[i][j];
                mean_grad[j] += grads[i][j] / static_cast<double>(n);
            }
        }
        for (std::size_t j = 0; j < 6; ++j) {
            CHECK(expectation[j] ==
                  doctest::Approx(mean_grad[j]).epsilon(1e-12).scale(std::abs(mean_grad[j]) + 1.0));
        }
    }
}

TEST_CASE("soft max-loss identity: biased expectation parallels powered-loss gradient") {
    // Scalar model family: psi_i(theta) = theta * x_i, squared error to y_i.
    // Exact enumeration of sum_i p_i alpha_i dL_i/dtheta versus finite
    // differences of (1/n) sum_i L_i^(2-k).
    Rng rng(29);
    const std::size_t n = 8;
    std::vector<double> xs = random_vector(n, rng, 0.5, 2.0);
    std::vector<double> ys = random_vector(n, rng, -2.0, 2.0);
    std::vector<double> theta = {0.7, -0.4};  // two-parameter model: psi = t0*x + t1

    auto loss_i = [&](std::span<const double> th, std::size_t i) {
        double psi = th[0] * xs[i] + th[1];
        double d = psi - ys[i];
        return d * d;
    };
    auto dloss_i = [&](std::span<const double> th, std::size_t i) {
        double psi = th[0] * xs[i] + th[1];
        return std::vector<double>{2.0 * (psi - ys[i]) * xs[i], 2.0 * (psi - ys[i])};
    };

    for (double k : {0.0, 0.5, 1.0}) {
        std::vector<double> losses(n);
        for (std::size_t i = 0; i < n; ++i) losses[i] = loss_i(theta, i);
        std::vector<std::size_t> pool(n);
        std::iota(pool.begin(), pool.end(), std::size_t{0});
        auto dist = build_distribution(pool, losses, 0.0);
        std::vector<std::size_t> all(n);
        std::iota(all.begin(), all.end(), std::size_t{0});
        std::vector<double> alpha = biased_weights(dist, all, BiasExponent(k));

        std::vector<double> expectation(2, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<double> g = dloss_i(theta, i);
            for (std::size_t j = 0; j < 2; ++j)
                expectation[j] += dist.probs[i] * alpha[i] * g[j];
        }

        auto powered = [&](std::span<const double> th) {
            double s = 0.0;
            for (std::size_t i = 0; i < n; ++i) s += std::pow(loss_i(th, i), 2.0 - k);
            return s / static_cast<double>(n);
        };
        std::vector<double> fd = test_util::central_differences(powered, theta, 1e-6);

        CHECK(cosine_similarity(expectation, fd) >= 1.0 - 1e-8);
        // coordinatewise ratio constant
        double r0 = expectation[0] / fd[0];
        double r1 = expectation[1] / fd[1];
        CHECK(std::abs(r0 - r1) / std::abs(r0) < 1e-6);
        CHECK(r0 > 0.0);
    }
}
