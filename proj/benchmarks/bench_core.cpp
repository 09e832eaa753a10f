#include <benchmark/benchmark.h>

#include "istrain/history.hpp"
#include "istrain/nn.hpp"
#include "istrain/sampling.hpp"

namespace {

using namespace istrain;

void BM_MlpForward(benchmark::State& state) {
    Rng rng(1);
    MlpParams params = MlpParams::random({784, 128, 10}, 0.0, rng);
    std::vector<double> x(784);
    for (double& v : x) v = rng.next_double();
    for (auto _ : state) {
        benchmark::DoNotOptimize(mlp_forward(params, x));
    }
}
BENCHMARK(BM_MlpForward);

void BM_Backward(benchmark::State& state) {
    Rng rng(1);
    MlpParams params = MlpParams::random({784, 128, 10}, 0.0, rng);
    std::vector<std::vector<double>> xs(32, std::vector<double>(784));
    for (auto& x : xs)
        for (double& v : x) v = rng.next_double();
    std::vector<TrainSample> batch;
    for (auto& x : xs) batch.push_back({x, 3, {}});
    std::vector<double> alpha(batch.size(), 1.0);
    for (auto _ : state) {
        benchmark::DoNotOptimize(backward(params, LossKind::Nll, batch, alpha));
    }
}
BENCHMARK(BM_Backward);

void BM_BuildAndSample(benchmark::State& state) {
    Rng rng(1);
    std::size_t n = static_cast<std::size_t>(state.range(0));
    std::vector<double> scores(n);
    for (double& s : scores) s = rng.next_double();
    for (auto _ : state) {
        std::vector<std::size_t> pool = presample_pool(60000, n, rng);
        ImportanceDistribution dist = build_distribution(std::move(pool), scores, 0.1);
        benchmark::DoNotOptimize(sample_batch(dist, n / 2, rng));
    }
}
BENCHMARK(BM_BuildAndSample)->Arg(64)->Arg(256)->Arg(1024);

void BM_ApproxPredict(benchmark::State& state) {
    Rng rng(1);
    ApproxParams params = ApproxParams::random(10, rng);
    HistoryStore store(64, 10);
    for (std::uint64_t t = 0; t < 10; ++t) store.record_loss(0, t, 0.5 + 0.01 * t);
    for (auto _ : state) {
        benchmark::DoNotOptimize(predict_importance(params, 0, 3, store, 1.0));
    }
}
BENCHMARK(BM_ApproxPredict);

}  // namespace

BENCHMARK_MAIN();
