#ifndef FEDMETER_EXPERIMENT_HPP
#define FEDMETER_EXPERIMENT_HPP

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedmeter/compression.hpp"
#include "fedmeter/federation.hpp"

namespace fedmeter {

struct DataSourceConfig {
    std::string source = "synthetic";  // "synthetic" | "csv"
    std::string path;                  // csv only
    std::size_t clusters = 10;
    std::size_t meters_per_cluster = 50;  // synthetic only
    std::size_t days = 533;               // synthetic only
};

struct SplitConfig {
    std::size_t train_days = 503;
    std::size_t test_days = 30;
};

struct ModelConfig {
    std::size_t hidden_units = 50;
    std::size_t window = 48;
    double learning_rate = 0.01;
    std::size_t epochs = 4;
    double clip_norm = 5.0;
};

struct FederationConfig {
    bool enabled = true;
    std::size_t round_granularity = 48;  // 48 = daily, 1 = every 30 minutes
    WeightMode weights = WeightMode::Uniform;
};

struct ExperimentConfig {
    std::string label = "experiment";
    std::uint64_t master_seed = 1;
    DataSourceConfig data;
    SplitConfig split;
    ModelConfig model;
    FederationConfig federation;
    CompressionConfig compression;
    std::string output_dir = "out";

    void validate() const;
};

// Strict parse: unknown keys and wrong types are ConfigErrors. Absent
// keys take the defaults above.
ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& c);
ExperimentConfig load_config_file(const std::string& path);

struct ExperimentOutput {
    nlohmann::json report;
    std::string round_log;     // CSV with one row per client round
    double wall_seconds = 0.0;  // kept out of the report for determinism
};

// Runs local-only or federated training per config and scores every
// meter on its raw-kWh test days. Output depends only on the config.
ExperimentOutput run_experiment(const ExperimentConfig& cfg, unsigned threads,
                                bool verbose = false);

// Writes report.json, rounds.csv and run.meta.json (wall time) to dir.
void write_experiment_files(const ExperimentOutput& out,
                            const std::string& dir);

// Writes meters.csv plus manifest.json for a synthetic cohort.
void run_generate(const ExperimentConfig& cfg, const std::string& dir);

nlohmann::json load_report_file(const std::string& path);

// One row per report: label, overall metrics, bytes, deltas vs first.
std::string compare_reports_text(const std::vector<nlohmann::json>& reports);
std::string compare_reports_csv(const std::vector<nlohmann::json>& reports);

}  // namespace fedmeter

#endif
