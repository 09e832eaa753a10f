#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "istrain/experiment.hpp"

namespace {

int cmd_run(const std::string& config_path) {
    istrain::ExperimentSpec spec = istrain::parse_config(config_path);
    if (const char* dir = std::getenv("ISTRAIN_OUTPUT_DIR")) spec.output_dir = dir;
    istrain::ExperimentResult result = istrain::run_experiment(spec);
    for (const std::string& f : result.files_written) std::cout << "wrote " << f << "\n";
    if (result.exit_code != 0) std::cerr << "one or more runs aborted\n";
    return result.exit_code;
}

int cmd_analyze(const std::string& dir, std::size_t window, double threshold) {
    istrain::VarianceReport report = istrain::analyze_directory(dir, window, threshold);
    std::string path = dir + "/summary.csv";
    istrain::write_summary_csv(path, report);
    std::cout << "wrote " << path << "\n";
    for (const auto& row : report.rows) {
        std::cout << row.name << ": final ema_loss " << row.final_ema_loss;
        if (row.iterations_to_threshold)
            std::cout << ", reached " << threshold << " at iteration "
                      << *row.iterations_to_threshold;
        std::cout << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Importance-sampling trainer for small neural networks"};
    app.require_subcommand(1);

    std::string config_path;
    auto* run = app.add_subcommand("run", "Run an experiment from a config file");
    run->add_option("config", config_path, "Path to the experiment config")->required();

    std::string analyze_dir;
    std::size_t window = 50;
    double threshold = 0.5;
    auto* analyze = app.add_subcommand("analyze", "Summarize run CSVs in a directory");
    analyze->add_option("dir", analyze_dir, "Directory with run_*.csv files")->required();
    analyze->add_option("--window", window, "Moving-statistics window");
    analyze->add_option("--threshold", threshold, "Loss threshold for iterations-to-threshold");

    auto* gencfg = app.add_subcommand("gencfg", "Print a commented default config");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return cmd_run(config_path);
        if (analyze->parsed()) return cmd_analyze(analyze_dir, window, threshold);
        if (gencfg->parsed()) {
            std::cout << istrain::default_config_text();
            return 0;
        }
    } catch (const istrain::ConfigError& e) {
        std::cerr << "config error";
        if (e.line > 0) {
            std::cerr << " at line " << e.line;
            if (e.column > 0) std::cerr << ", column " << e.column;
        }
        std::cerr << ": " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
