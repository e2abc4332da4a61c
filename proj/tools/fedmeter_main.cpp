#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fedmeter/errors.hpp"
#include "fedmeter/experiment.hpp"

namespace {

constexpr int kExitInternal = 1;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

int dispatch(int argc, char** argv) {
    CLI::App app{"Federated smart-meter load forecasting simulator"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    unsigned threads = 1;
    bool verbose = false;
    std::vector<std::string> report_paths;

    CLI::App* generate =
        app.add_subcommand("generate", "Write a synthetic cohort as CSV");
    generate->add_option("--config", config_path, "Experiment config (JSON)")
        ->required();
    generate->add_option("--out", out_dir,
                         "Output directory (default: config output_dir)");

    CLI::App* run = app.add_subcommand(
        "run", "Train per config and write report.json + rounds.csv");
    run->add_option("--config", config_path, "Experiment config (JSON)")
        ->required();
    run->add_option("--out", out_dir,
                    "Output directory (default: config output_dir)");
    run->add_option("--threads", threads, "Worker threads (default 1)");
    run->add_flag("--verbose", verbose, "Progress on stderr");

    CLI::App* compare =
        app.add_subcommand("compare", "Tabulate reports side by side");
    compare->add_option("reports", report_paths, "report.json paths")
        ->required()
        ->expected(-1);
    compare->add_option("--out", out_dir, "Also write compare.csv here");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    if (generate->parsed()) {
        const fedmeter::ExperimentConfig cfg =
            fedmeter::load_config_file(config_path);
        const std::string dir = out_dir.empty() ? cfg.output_dir : out_dir;
        fedmeter::run_generate(cfg, dir);
        std::cout << "wrote " << dir << "/meters.csv and manifest.json\n";
        return 0;
    }

    if (run->parsed()) {
        const fedmeter::ExperimentConfig cfg =
            fedmeter::load_config_file(config_path);
        const fedmeter::ExperimentOutput out =
            fedmeter::run_experiment(cfg, threads, verbose);
        const std::string dir = out_dir.empty() ? cfg.output_dir : out_dir;
        fedmeter::write_experiment_files(out, dir);
        const auto& overall = out.report.at("results").at("overall");
        std::cout << cfg.label << ": nrmse "
                  << overall.at("nrmse").get<double>() << ", mae "
                  << overall.at("mae").get<double>() << ", bytes_up "
                  << out.report.at("communication").at("bytes_up")
                         .get<std::uint64_t>()
                  << " -> " << dir << "/report.json\n";
        std::fprintf(stderr, "wall time %.3fs\n", out.wall_seconds);
        return 0;
    }

    // compare
    std::vector<nlohmann::json> reports;
    reports.reserve(report_paths.size());
    for (const std::string& p : report_paths) {
        reports.push_back(fedmeter::load_report_file(p));
    }
    std::cout << fedmeter::compare_reports_text(reports);
    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        std::ofstream f(out_dir + "/compare.csv");
        if (!f) {
            throw fedmeter::DataError("cannot write '" + out_dir +
                                      "/compare.csv'");
        }
        f << fedmeter::compare_reports_csv(reports);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return dispatch(argc, argv);
    } catch (const fedmeter::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const fedmeter::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const fedmeter::NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInternal;
    }
}
