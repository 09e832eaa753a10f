#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "istrain/common.hpp"
#include "istrain/trainer.hpp"

namespace istrain {

/// Simple least-squares fit of actual on predicted: argmin_{a,b} sum (a*pred_i + b - act_i)^2.
/// Degenerate predictors (variance < 1e-12) get a = 0, b = mean(actual).
struct TrackingFit {
    double a = 0.0;
    double b = 0.0;
    std::size_t n = 0;
};

TrackingFit tracking_coefficients(std::span<const double> predicted,
                                  std::span<const double> actual);

/// Losses sorted by ascending gradient norm, with Spearman rank correlation
/// (average-rank ties) and window-50 moving statistics of the sorted losses.
struct OrderingDiagnostic {
    double spearman = 0.0;
    std::vector<double> moving_avg;
    std::vector<double> moving_std;
    std::size_t window = 50;
};

OrderingDiagnostic loss_gnorm_ordering(std::span<const double> losses,
                                       std::span<const double> gnorms);

double spearman_correlation(std::span<const double> a, std::span<const double> b);

struct RunLog {
    std::string name;
    std::vector<MetricsRecord> metrics;
};

struct StrategySummary {
    std::string name;
    std::vector<double> loss_moving_mean;
    std::vector<double> loss_moving_std;
    std::vector<double> var_trace_moving_mean;
    std::vector<double> var_trace_moving_std;
    double final_ema_loss = 0.0;
    std::optional<std::uint64_t> iterations_to_threshold;  // first ema_loss <= threshold
};

struct VarianceReport {
    std::vector<StrategySummary> rows;
    std::size_t window = 50;
    double loss_threshold = 0.5;
};

/// Per-run moving statistics plus iterations-to-threshold. Logs with
/// different lengths are truncated to the shortest iteration grid.
VarianceReport variance_report(std::span<const RunLog> logs, std::size_t window = 50,
                               double loss_threshold = 0.5);

}  // namespace istrain
