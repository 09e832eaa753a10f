#include "istrain/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace istrain {

namespace {

std::string fmt_real(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string fmt_opt(const std::optional<double>& v) {
    return v ? fmt_real(*v) : std::string();
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) fields.push_back(field);
    // a trailing empty field is dropped by getline; restore it
    if (!line.empty() && line.back() == ',') fields.push_back("");
    return fields;
}

}  // namespace

void write_metrics_csv(const std::string& path, const std::vector<MetricsRecord>& metrics) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("write_metrics_csv: cannot open " + path);
    out << kMetricsCsvHeader << "\n";
    for (const MetricsRecord& r : metrics) {
        out << r.iteration << ',' << fmt_real(r.epoch) << ',' << fmt_real(r.wall_ms) << ','
            << fmt_real(r.batch_mean_loss) << ',' << fmt_real(r.ema_loss) << ','
            << fmt_real(r.grad_variance_trace) << ',' << fmt_opt(r.max_train_loss) << ','
            << fmt_opt(r.tracking_a) << ',' << fmt_opt(r.tracking_b) << ','
            << fmt_real(r.smoothing_c_used) << "\n";
    }
    if (!out) throw IoError("write_metrics_csv: write failed for " + path);
}

std::vector<MetricsRecord> read_metrics_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("read_metrics_csv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw FormatError("read_metrics_csv: empty file " + path);
    if (line != kMetricsCsvHeader)
        throw FormatError("read_metrics_csv: unexpected header in " + path);

    std::vector<MetricsRecord> metrics;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> f = split_csv_line(line);
        if (f.size() != 10)
            throw FormatError("read_metrics_csv: expected 10 fields, got " +
                              std::to_string(f.size()) + " in " + path);
        MetricsRecord r;
        r.iteration = std::stoull(f[0]);
        r.epoch = std::stod(f[1]);
        r.wall_ms = std::stod(f[2]);
        r.batch_mean_loss = std::stod(f[3]);
        r.ema_loss = std::stod(f[4]);
        r.grad_variance_trace = std::stod(f[5]);
        if (!f[6].empty()) r.max_train_loss = std::stod(f[6]);
        if (!f[7].empty()) r.tracking_a = std::stod(f[7]);
        if (!f[8].empty()) r.tracking_b = std::stod(f[8]);
        r.smoothing_c_used = std::stod(f[9]);
        metrics.push_back(r);
    }
    return metrics;
}

std::string run_file_name(Strategy strategy, double k, std::uint64_t seed) {
    char kbuf[32];
    std::snprintf(kbuf, sizeof(kbuf), "%g", k);
    return std::string("run_") + strategy_name(strategy) + "_k" + kbuf + "_s" +
           std::to_string(seed) + ".csv";
}

void write_summary_csv(const std::string& path, const VarianceReport& report) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("write_summary_csv: cannot open " + path);
    out << "run,final_ema_loss,tail_loss_mean,tail_loss_std,tail_var_trace_mean,"
           "iters_to_threshold\n";
    for (const StrategySummary& row : report.rows) {
        out << row.name << ',' << fmt_real(row.final_ema_loss) << ','
            << (row.loss_moving_mean.empty() ? "" : fmt_real(row.loss_moving_mean.back())) << ','
            << (row.loss_moving_std.empty() ? "" : fmt_real(row.loss_moving_std.back())) << ','
            << (row.var_trace_moving_mean.empty() ? ""
                                                  : fmt_real(row.var_trace_moving_mean.back()))
            << ','
            << (row.iterations_to_threshold ? std::to_string(*row.iterations_to_threshold)
                                            : std::string())
            << "\n";
    }
    if (!out) throw IoError("write_summary_csv: write failed for " + path);
}

ExperimentResult run_experiment(const ExperimentSpec& spec) {
    if (spec.cells.empty()) throw ConfigError("run_experiment: no cells");
    if (spec.seeds.empty()) throw ConfigError("run_experiment: no seeds");

    Dataset dataset = spec.source == ExperimentSpec::Source::Idx
                          ? load_idx(spec.images_path, spec.labels_path)
                          : synth_dataset(spec.synth, spec.synth_seed);

    std::filesystem::create_directories(spec.output_dir);

    ExperimentResult result;
    std::vector<RunLog> logs;
    for (const ExperimentCell& cell : spec.cells) {
        for (std::uint64_t seed : spec.seeds) {
            TrainConfig cfg = spec.train;
            cfg.strategy = cell.strategy;
            cfg.k = cell.k;
            cfg.smoothing = cell.smoothing;
            cfg.seed = seed;

            Rng rng(seed);
            TrainResult run = train(cfg, dataset, rng);
            std::string name = run_file_name(cell.strategy, cell.k, seed);
            std::string path = (std::filesystem::path(spec.output_dir) / name).string();
            write_metrics_csv(path, run.metrics);
            result.files_written.push_back(path);
            logs.push_back({name, std::move(run.metrics)});
            if (run.aborted) result.exit_code = 1;
        }
    }

    VarianceReport report = variance_report(logs, 50, spec.summary_loss_threshold);
    std::string summary_path = (std::filesystem::path(spec.output_dir) / "summary.csv").string();
    write_summary_csv(summary_path, report);
    result.files_written.push_back(summary_path);
    return result;
}

VarianceReport analyze_directory(const std::string& dir, std::size_t window,
                                 double loss_threshold) {
    std::vector<RunLog> logs;
    std::vector<std::filesystem::path> paths;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        std::string name = entry.path().filename().string();
        if (name.rfind("run_", 0) == 0 && entry.path().extension() == ".csv")
            paths.push_back(entry.path());
    }
    std::sort(paths.begin(), paths.end());
    for (const auto& p : paths) logs.push_back({p.filename().string(), read_metrics_csv(p.string())});
    if (logs.empty()) throw IoError("analyze_directory: no run_*.csv files in " + dir);
    return variance_report(logs, window, loss_threshold);
}

}  // namespace istrain
