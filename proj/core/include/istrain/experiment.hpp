#pragma once

#include <string>
#include <vector>

#include "istrain/analysis.hpp"
#include "istrain/config.hpp"

namespace istrain {

/// Fixed metrics CSV schema. Optional fields serialize as empty cells;
/// reals use 17 significant digits so byte equality implies value equality.
inline constexpr const char* kMetricsCsvHeader =
    "iteration,epoch,wall_ms,batch_loss,ema_loss,var_trace,max_loss,tracking_a,tracking_b,"
    "smoothing_c";

void write_metrics_csv(const std::string& path, const std::vector<MetricsRecord>& metrics);
std::vector<MetricsRecord> read_metrics_csv(const std::string& path);

struct ExperimentResult {
    int exit_code = 0;
    std::vector<std::string> files_written;
};

/// Runs every (cell, seed) combination, writing one metrics CSV per run and
/// a summary CSV. Exit code is nonzero iff any run aborted before completing
/// its iterations.
ExperimentResult run_experiment(const ExperimentSpec& spec);

/// Rebuilds the summary from the run CSVs in a directory.
VarianceReport analyze_directory(const std::string& dir, std::size_t window = 50,
                                 double loss_threshold = 0.5);

void write_summary_csv(const std::string& path, const VarianceReport& report);

/// File name for one run: run_<strategy>_k<k>_s<seed>.csv
std::string run_file_name(Strategy strategy, double k, std::uint64_t seed);

}  // namespace istrain
