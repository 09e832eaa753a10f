#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "istrain/dataset.hpp"
#include "istrain/trainer.hpp"

namespace istrain {

struct ExperimentCell {
    Strategy strategy = Strategy::Loss;
    double k = 0.5;
    Smoothing smoothing;
};

struct ExperimentSpec {
    enum class Source { Synthetic, Idx };

    Source source = Source::Synthetic;
    std::string images_path;
    std::string labels_path;
    SynthSpec synth;
    std::uint64_t synth_seed = 7;

    std::vector<ExperimentCell> cells;
    std::vector<std::uint64_t> seeds;
    TrainConfig train;  // template; strategy/k/smoothing/seed filled per cell and seed
    double summary_loss_threshold = 0.5;
    std::string output_dir = "runs";
};

/// Parses the line-based `key = value` configuration format. Unknown keys,
/// malformed values and invariant violations are reported with line (and,
/// for value errors, column) positions.
ExperimentSpec parse_config_text(const std::string& text);
ExperimentSpec parse_config(const std::string& path);

/// A commented default configuration (the `gencfg` output).
std::string default_config_text();

}  // namespace istrain
