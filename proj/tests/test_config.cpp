#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <string>

#include "istrain/config.hpp"

using namespace istrain;

TEST_CASE("minimal config keeps defaults") {
    ExperimentSpec spec = parse_config_text("cell = loss k=0.5 smoothing=adaptive\n");
    CHECK(spec.source == ExperimentSpec::Source::Synthetic);
    REQUIRE(spec.cells.size() == 1);
    CHECK(spec.cells[0].strategy == Strategy::Loss);
    CHECK(spec.cells[0].k == 0.5);
    CHECK(spec.cells[0].smoothing.mode == Smoothing::Mode::Adaptive);
    CHECK(spec.seeds == std::vector<std::uint64_t>{1});
    CHECK(spec.train.batch_size == 32);
    CHECK(spec.train.iterations == 1000);
    CHECK(spec.train.pool_factor == 2.0);
    CHECK(spec.output_dir == "runs");
    CHECK(spec.summary_loss_threshold == 0.5);
}

TEST_CASE("full config round trips every field") {
    std::string text = R"(
# comment line
dataset.source = synthetic
dataset.n = 200          # trailing comment
dataset.dims = 3
dataset.classes = 4
dataset.noise = 0.25
dataset.radius = 1.5
dataset.hard_fraction = 0.1
dataset.seed = 99

cell = gnorm k=1 smoothing=constant:2.5
cell = approx k=-0.5 smoothing=adaptive
seeds = 4, 5, 6

train.iterations = 123
train.batch_size = 16
train.pool_factor = 3.0
train.ema_decay = 0.95
train.learning_rate = 0.01
train.optimizer = sgd
train.hidden = 8,4
train.dropout = 0.2
train.max_loss_sweep_interval = 50
train.history_window = 5
train.lstm_hidden = 12
train.embed_dim = 6
train.normalize_by_dataset_size = true
train.record_timing = false

summary.loss_threshold = 0.3
output_dir = out
)";
    ExperimentSpec spec = parse_config_text(text);
    CHECK(spec.synth.n == 200);
    CHECK(spec.synth.dims == 3);
    CHECK(spec.synth.classes == 4);
    CHECK(spec.synth.noise == 0.25);
    CHECK(spec.synth.radius == 1.5);
    CHECK(spec.synth.hard_fraction == 0.1);
    CHECK(spec.synth_seed == 99);

    REQUIRE(spec.cells.size() == 2);
    CHECK(spec.cells[0].strategy == Strategy::Gnorm);
    CHECK(spec.cells[0].k == 1.0);
    CHECK(spec.cells[0].smoothing.mode == Smoothing::Mode::Constant);
    CHECK(spec.cells[0].smoothing.constant == 2.5);
    CHECK(spec.cells[1].strategy == Strategy::Approx);
    CHECK(spec.cells[1].k == -0.5);

    CHECK(spec.seeds == std::vector<std::uint64_t>{4, 5, 6});
    CHECK(spec.train.iterations == 123);
    CHECK(spec.train.batch_size == 16);
    CHECK(spec.train.pool_factor == 3.0);
    CHECK(spec.train.ema_decay == 0.95);
    CHECK(spec.train.learning_rate == 0.01);
    // approx lr follows learning_rate when not set explicitly
    CHECK(spec.train.approx_learning_rate == 0.01);
    CHECK(spec.train.optimizer == OptimizerState::Kind::Sgd);
    CHECK(spec.train.hidden == std::vector<std::size_t>{8, 4});
    CHECK(spec.train.dropout == 0.2);
    CHECK(spec.train.max_loss_sweep_interval == 50);
    CHECK(spec.train.history_window == 5);
    CHECK(spec.train.lstm_hidden == 12);
    CHECK(spec.train.embed_dim == 6);
    CHECK(spec.train.normalize_by_dataset_size);
    CHECK(!spec.train.record_timing);
    CHECK(spec.summary_loss_threshold == 0.3);
    CHECK(spec.output_dir == "out");
}

TEST_CASE("explicit approx learning rate is not overridden") {
    ExperimentSpec spec = parse_config_text(
        "cell = approx\n"
        "train.learning_rate = 0.01\n"
        "train.approx_learning_rate = 0.002\n");
    CHECK(spec.train.learning_rate == 0.01);
    CHECK(spec.train.approx_learning_rate == 0.002);
}

namespace {

ConfigError capture(const std::string& text) {
    try {
        parse_config_text(text);
    } catch (const ConfigError& e) {
        return e;
    }
    FAIL("expected ConfigError");
    return ConfigError("unreachable");
}

}  // namespace

TEST_CASE("semantic errors cite the violated constraint and the line") {
    ConfigError k_err = capture("cell = loss k=1.5 smoothing=adaptive\n");
    CHECK(std::string(k_err.what()).find("k <= 1") != std::string::npos);
    CHECK(k_err.line == 1);

    ConfigError pool_err = capture(
        "cell = loss\n"
        "train.pool_factor = 0.5\n");
    CHECK(std::string(pool_err.what()).find(">= 1") != std::string::npos);
    CHECK(pool_err.line == 2);

    ConfigError decay_err = capture(
        "cell = loss\n"
        "train.ema_decay = 1.0\n");
    CHECK(std::string(decay_err.what()).find("(0, 1)") != std::string::npos);

    ConfigError drop_err = capture(
        "cell = loss\n"
        "train.dropout = 1.0\n");
    CHECK(std::string(drop_err.what()).find("[0, 1)") != std::string::npos);
}

TEST_CASE("unknown keys are rejected by name and line") {
    ConfigError err = capture(
        "cell = loss\n"
        "train.moemntum = 0.9\n");
    CHECK(std::string(err.what()).find("moemntum") != std::string::npos);
    CHECK(err.line == 2);
}

TEST_CASE("malformed input errors") {
    CHECK_THROWS_AS(parse_config_text("just words\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("cell = loss\ndataset.n = twelve\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("cell = warp\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("cell = loss speed=9\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("cell = loss smoothing=linear\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("dataset.n = 10\n"), ConfigError);  // no cell
    CHECK_THROWS_AS(parse_config_text("cell = loss\ndataset.source = idx\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("cell = loss\ntrain.optimizer = rmsprop\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("cell = loss\ndataset.n =\n"), ConfigError);
}

TEST_CASE("default config text parses cleanly") {
    ExperimentSpec spec = parse_config_text(default_config_text());
    CHECK(spec.cells.size() == 2);
    CHECK(spec.seeds.size() == 3);
    CHECK(spec.train.iterations == 2000);
    CHECK(spec.synth.hard_fraction == 0.05);
}
