#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "istrain/common.hpp"
#include "istrain/rng.hpp"

namespace istrain {

struct Dataset {
    Matrix features;          // n x d
    std::vector<int> labels;  // classification targets, empty for regression
    Matrix targets;           // regression targets, empty for classification
    std::size_t num_classes = 0;

    std::size_t size() const { return features.rows; }
    std::size_t dims() const { return features.cols; }
    bool is_classification() const { return !labels.empty(); }
};

/// Big-endian IDX image/label pair. Pixels are scaled to [0, 1].
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

/// Writes an IDX image/label pair from raw pixel bytes. Fixture support for
/// round-trip checks.
void write_idx(const std::string& images_path, const std::string& labels_path,
               const std::vector<std::vector<std::uint8_t>>& images, std::size_t rows,
               std::size_t cols, const std::vector<std::uint8_t>& labels);

struct SynthSpec {
    std::size_t n = 1024;
    std::size_t dims = 2;
    std::size_t classes = 2;
    double noise = 0.3;
    double radius = 2.0;
    /// Fraction of samples drawn with 3x noise ("rare" hard points).
    double hard_fraction = 0.0;
};

/// Gaussian blobs with class means on a circle of the given radius in the
/// first two dimensions. Labels are assigned round-robin so class
/// frequencies match exactly. Deterministic per seed.
Dataset synth_dataset(const SynthSpec& spec, std::uint64_t seed);

}  // namespace istrain
