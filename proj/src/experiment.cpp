#include "fedmeter/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "fedmeter/data.hpp"
#include "fedmeter/errors.hpp"
#include "fedmeter/metrics.hpp"
#include "fedmeter/parallel.hpp"

namespace fedmeter {

namespace {

using nlohmann::json;

// --- strict json helpers --------------------------------------------------

void check_keys(const json& j, const std::string& where,
                std::initializer_list<const char*> allowed) {
    if (!j.is_object()) {
        throw ConfigError(where + ": expected a JSON object");
    }
    for (const auto& item : j.items()) {
        bool known = false;
        for (const char* k : allowed) {
            if (item.key() == k) {
                known = true;
                break;
            }
        }
        if (!known) {
            throw ConfigError(where + ": unknown key '" + item.key() + "'");
        }
    }
}

std::string get_string(const json& j, const std::string& where,
                       const char* key, const std::string& fallback) {
    if (!j.contains(key)) return fallback;
    const json& v = j.at(key);
    if (!v.is_string()) {
        throw ConfigError(where + "." + key + ": expected a string");
    }
    return v.get<std::string>();
}

bool get_bool(const json& j, const std::string& where, const char* key,
              bool fallback) {
    if (!j.contains(key)) return fallback;
    const json& v = j.at(key);
    if (!v.is_boolean()) {
        throw ConfigError(where + "." + key + ": expected a boolean");
    }
    return v.get<bool>();
}

std::uint64_t get_uint(const json& j, const std::string& where,
                       const char* key, std::uint64_t fallback) {
    if (!j.contains(key)) return fallback;
    const json& v = j.at(key);
    if (!v.is_number_integer() ||
        (!v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
        throw ConfigError(where + "." + key +
                          ": expected a non-negative integer");
    }
    return v.get<std::uint64_t>();
}

double get_double(const json& j, const std::string& where, const char* key,
                  double fallback) {
    if (!j.contains(key)) return fallback;
    const json& v = j.at(key);
    if (!v.is_number()) {
        throw ConfigError(where + "." + key + ": expected a number");
    }
    return v.get<double>();
}

const char* weight_mode_name(WeightMode m) {
    return m == WeightMode::Uniform ? "uniform" : "sample_proportional";
}

WeightMode weight_mode_from(const std::string& s, const std::string& where) {
    if (s == "uniform") return WeightMode::Uniform;
    if (s == "sample_proportional") return WeightMode::SampleProportional;
    throw ConfigError(where + ": weights must be 'uniform' or "
                      "'sample_proportional', got '" + s + "'");
}

const char* compression_mode_name(CompressionConfig::Mode m) {
    switch (m) {
        case CompressionConfig::Mode::None: return "none";
        case CompressionConfig::Mode::Dense: return "dense";
        case CompressionConfig::Mode::Mask: return "mask";
        case CompressionConfig::Mode::Quantize: return "quantize";
    }
    return "none";
}

CompressionConfig::Mode compression_mode_from(const std::string& s,
                                              const std::string& where) {
    if (s == "none") return CompressionConfig::Mode::None;
    if (s == "dense") return CompressionConfig::Mode::Dense;
    if (s == "mask") return CompressionConfig::Mode::Mask;
    if (s == "quantize") return CompressionConfig::Mode::Quantize;
    throw ConfigError(where + ": mode must be one of none, dense, mask, "
                      "quantize; got '" + s + "'");
}

// --- experiment pipeline --------------------------------------------------

struct PreparedMeter {
    std::string id;
    SplitSeries split;
    WindowSet windows;       // over the normalized train part
    Vector normalized_full;  // normalized train ++ normalized test
};

MeterScore evaluate_meter(const LstmParams& params, const PreparedMeter& m,
                          std::size_t window) {
    const std::size_t train_len = m.split.train.size();
    const std::size_t n_test = m.split.test.size();
    Vector pred(n_test);
    LstmState state;
    state.resize(window, params.hidden());
    for (std::size_t j = 0; j < n_test; ++j) {
        const std::span<const double> x(
            m.normalized_full.data() + train_len + j - window, window);
        pred[j] = m.split.denormalize(forward_into(params, x, state));
    }
    MeterScore score;
    score.meter_id = m.id;
    score.nrmse = nrmse(m.split.test, pred);
    score.mae = mae(m.split.test, pred);
    return score;
}

std::string format_double(double v, const char* fmt) {
    char buf[64];
    std::snprintf(buf, sizeof buf, fmt, v);
    return buf;
}

}  // namespace

void ExperimentConfig::validate() const {
    if (label.empty()) throw ConfigError("label must not be empty");
    if (data.source != "synthetic" && data.source != "csv") {
        throw ConfigError("data.source must be 'synthetic' or 'csv', got '" +
                          data.source + "'");
    }
    if (data.source == "csv" && data.path.empty()) {
        throw ConfigError("data.path is required when data.source is 'csv'");
    }
    if (data.clusters == 0) throw ConfigError("data.clusters must be >= 1");
    if (data.source == "synthetic") {
        if (data.meters_per_cluster == 0) {
            throw ConfigError("data.meters_per_cluster must be >= 1");
        }
        if (data.days < split.train_days + split.test_days) {
            throw ConfigError(
                "data.days must cover the split: " +
                std::to_string(data.days) + " < " +
                std::to_string(split.train_days + split.test_days));
        }
    }
    if (split.train_days == 0 || split.test_days == 0) {
        throw ConfigError("split.train_days and split.test_days must be >= 1");
    }
    if (model.hidden_units == 0) {
        throw ConfigError("model.hidden_units must be >= 1");
    }
    if (model.window == 0) throw ConfigError("model.window must be >= 1");
    if (split.train_days * kSlotsPerDay < model.window + 1) {
        throw ConfigError("train split too short for window length " +
                          std::to_string(model.window));
    }
    if (!(model.learning_rate > 0.0) ||
        !std::isfinite(model.learning_rate)) {
        throw ConfigError("model.learning_rate must be a positive number");
    }
    if (model.epochs == 0) throw ConfigError("model.epochs must be >= 1");
    if (!(model.clip_norm > 0.0)) {
        throw ConfigError("model.clip_norm must be positive");
    }
    if (federation.round_granularity == 0) {
        throw ConfigError("federation.round_granularity must be >= 1");
    }
    compression.validate();
    if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
}

ExperimentConfig config_from_json(const json& j) {
    check_keys(j, "config",
               {"label", "master_seed", "data", "split", "model",
                "federation", "compression", "output_dir"});
    ExperimentConfig c;
    c.label = get_string(j, "config", "label", c.label);
    c.master_seed = get_uint(j, "config", "master_seed", c.master_seed);
    c.output_dir = get_string(j, "config", "output_dir", c.output_dir);

    if (j.contains("data")) {
        const json& d = j.at("data");
        check_keys(d, "config.data",
                   {"source", "path", "clusters", "meters_per_cluster",
                    "days"});
        c.data.source = get_string(d, "config.data", "source", c.data.source);
        c.data.path = get_string(d, "config.data", "path", c.data.path);
        c.data.clusters = std::size_t(
            get_uint(d, "config.data", "clusters", c.data.clusters));
        c.data.meters_per_cluster =
            std::size_t(get_uint(d, "config.data", "meters_per_cluster",
                                 c.data.meters_per_cluster));
        c.data.days =
            std::size_t(get_uint(d, "config.data", "days", c.data.days));
    }
    if (j.contains("split")) {
        const json& s = j.at("split");
        check_keys(s, "config.split", {"train_days", "test_days"});
        c.split.train_days = std::size_t(
            get_uint(s, "config.split", "train_days", c.split.train_days));
        c.split.test_days = std::size_t(
            get_uint(s, "config.split", "test_days", c.split.test_days));
    }
    if (j.contains("model")) {
        const json& m = j.at("model");
        check_keys(m, "config.model",
                   {"hidden_units", "window", "learning_rate", "epochs",
                    "clip_norm"});
        c.model.hidden_units = std::size_t(get_uint(
            m, "config.model", "hidden_units", c.model.hidden_units));
        c.model.window =
            std::size_t(get_uint(m, "config.model", "window", c.model.window));
        c.model.learning_rate = get_double(m, "config.model", "learning_rate",
                                           c.model.learning_rate);
        c.model.epochs =
            std::size_t(get_uint(m, "config.model", "epochs", c.model.epochs));
        c.model.clip_norm =
            get_double(m, "config.model", "clip_norm", c.model.clip_norm);
    }
    if (j.contains("federation")) {
        const json& f = j.at("federation");
        check_keys(f, "config.federation",
                   {"enabled", "round_granularity", "weights"});
        c.federation.enabled =
            get_bool(f, "config.federation", "enabled", c.federation.enabled);
        c.federation.round_granularity = std::size_t(
            get_uint(f, "config.federation", "round_granularity",
                     c.federation.round_granularity));
        c.federation.weights = weight_mode_from(
            get_string(f, "config.federation", "weights",
                       weight_mode_name(c.federation.weights)),
            "config.federation");
    }
    if (j.contains("compression")) {
        const json& z = j.at("compression");
        check_keys(z, "config.compression", {"mode", "keep_fraction", "bits"});
        c.compression.mode = compression_mode_from(
            get_string(z, "config.compression", "mode",
                       compression_mode_name(c.compression.mode)),
            "config.compression");
        c.compression.keep_fraction =
            get_double(z, "config.compression", "keep_fraction",
                       c.compression.keep_fraction);
        const std::uint64_t bits = get_uint(z, "config.compression", "bits",
                                            std::uint64_t(c.compression.bits));
        c.compression.bits = int(bits);
    }
    c.validate();
    return c;
}

json config_to_json(const ExperimentConfig& c) {
    json j;
    j["label"] = c.label;
    j["master_seed"] = c.master_seed;
    j["data"] = {{"source", c.data.source},
                 {"path", c.data.path},
                 {"clusters", c.data.clusters},
                 {"meters_per_cluster", c.data.meters_per_cluster},
                 {"days", c.data.days}};
    j["split"] = {{"train_days", c.split.train_days},
                  {"test_days", c.split.test_days}};
    j["model"] = {{"hidden_units", c.model.hidden_units},
                  {"window", c.model.window},
                  {"learning_rate", c.model.learning_rate},
                  {"epochs", c.model.epochs},
                  {"clip_norm", c.model.clip_norm}};
    j["federation"] = {{"enabled", c.federation.enabled},
                       {"round_granularity", c.federation.round_granularity},
                       {"weights", weight_mode_name(c.federation.weights)}};
    j["compression"] = {{"mode", compression_mode_name(c.compression.mode)},
                        {"keep_fraction", c.compression.keep_fraction},
                        {"bits", c.compression.bits}};
    j["output_dir"] = c.output_dir;
    return j;
}

ExperimentConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw ConfigError("config file '" + path + "' is not valid JSON: " +
                          e.what());
    }
    return config_from_json(j);
}

ExperimentOutput run_experiment(const ExperimentConfig& cfg, unsigned threads,
                                bool verbose) {
    cfg.validate();
    const auto t0 = std::chrono::steady_clock::now();

    // 1. Source data and cluster membership.
    std::vector<MeterSeries> series;
    std::vector<Cluster> clusters;
    if (cfg.data.source == "synthetic") {
        SyntheticCohort cohort =
            generate_synthetic(cfg.data.clusters, cfg.data.meters_per_cluster,
                               cfg.data.days, cfg.master_seed);
        series = std::move(cohort.series);
        clusters = std::move(cohort.clusters);
    } else {
        series = ingest_csv_file(cfg.data.path);
        if (series.empty()) {
            throw DataError("csv file '" + cfg.data.path +
                            "' contains no meters");
        }
        clusters = assign_clusters(series, cfg.data.clusters);
    }

    std::map<std::string, std::size_t> index_of;
    for (std::size_t i = 0; i < series.size(); ++i) {
        index_of[series[i].meter_id] = i;
    }

    // 2. Clean, split, normalize and window every meter.
    struct MeterRef {
        std::size_t cluster = 0;
        std::size_t series_index = 0;
    };
    std::vector<MeterRef> refs;
    for (std::size_t c = 0; c < clusters.size(); ++c) {
        if (clusters[c].meter_ids.empty()) {
            throw DataError("cluster " + std::to_string(c) + " has no meters");
        }
        for (const std::string& id : clusters[c].meter_ids) {
            const auto it = index_of.find(id);
            if (it == index_of.end()) {
                throw DataError("cluster references unknown meter '" + id +
                                "'");
            }
            refs.push_back(MeterRef{c, it->second});
        }
    }

    std::vector<PreparedMeter> prepared(refs.size());
    parallel_for(refs.size(), threads, [&](std::size_t i) {
        const MeterSeries cleaned = clean(series[refs[i].series_index]);
        PreparedMeter m;
        m.id = cleaned.meter_id;
        m.split = split_normalize(cleaned, cfg.split.train_days,
                                  cfg.split.test_days);
        m.windows = make_windows(m.split.normalized_train(), cfg.model.window);
        m.normalized_full = m.windows.series;
        const Vector test_norm = m.split.normalized_test();
        m.normalized_full.insert(m.normalized_full.end(), test_norm.begin(),
                                 test_norm.end());
        prepared[i] = std::move(m);
    });

    TrainConfig tcfg;
    tcfg.hidden_units = cfg.model.hidden_units;
    tcfg.window = cfg.model.window;
    tcfg.learning_rate = cfg.model.learning_rate;
    tcfg.epochs = cfg.model.epochs;
    tcfg.clip_norm = cfg.model.clip_norm;

    // 3. Train and score cluster by cluster.
    std::vector<ClusterScore> scores;
    std::vector<RoundLogRow> log;
    std::uint64_t bytes_up = 0, bytes_down = 0, total_rounds = 0,
                  total_uploads = 0;
    std::size_t base = 0;  // index of the cluster's first meter in `prepared`
    const std::size_t param_count =
        LstmParams(cfg.model.hidden_units, 1).param_count();

    for (std::size_t c = 0; c < clusters.size(); ++c) {
        const std::size_t n = clusters[c].meter_ids.size();
        const LstmParams init = init_params(
            cfg.model.hidden_units, 1,
            RngStream::derive(cfg.master_seed, RngPurpose::ParamInit, c));

        std::vector<MeterScore> meter_scores(n);
        if (cfg.federation.enabled) {
            std::vector<std::vector<TrainingWindow>> client_windows(n);
            for (std::size_t m = 0; m < n; ++m) {
                client_windows[m] = prepared[base + m].windows.all();
            }
            FedConfig fcfg;
            fcfg.round_granularity = cfg.federation.round_granularity;
            fcfg.weights = cfg.federation.weights;
            fcfg.epochs = cfg.model.epochs;
            fcfg.compression = cfg.compression;
            const FedRunResult run = run_federated(
                init, client_windows, tcfg, fcfg, cfg.master_seed, threads,
                std::uint32_t(base));
            parallel_for(n, threads, [&](std::size_t m) {
                meter_scores[m] = evaluate_meter(
                    run.global.params, prepared[base + m], cfg.model.window);
            });
            log.insert(log.end(), run.log.begin(), run.log.end());
            bytes_up += run.bytes_up;
            bytes_down += run.bytes_down;
            total_rounds += run.global.round_index;
            total_uploads += run.log.size();
        } else {
            std::vector<std::vector<RoundLogRow>> rows(n);
            parallel_for(n, threads, [&](std::size_t m) {
                const std::vector<TrainingWindow> windows =
                    prepared[base + m].windows.all();
                const LocalRunResult run =
                    run_local_only(init, windows, tcfg);
                meter_scores[m] = evaluate_meter(
                    run.params, prepared[base + m], cfg.model.window);
                for (std::size_t e = 0; e < run.epoch_losses.size(); ++e) {
                    rows[m].push_back(RoundLogRow{
                        std::uint64_t(e), e, std::uint32_t(base + m),
                        run.epoch_losses[e], 0, 0});
                }
            });
            for (std::size_t e = 0; e < cfg.model.epochs; ++e) {
                for (std::size_t m = 0; m < n; ++m) {
                    log.push_back(rows[m][e]);
                }
            }
        }
        scores.push_back(
            score_cluster(clusters[c].cluster_id, std::move(meter_scores)));
        if (verbose) {
            std::cerr << "cluster " << clusters[c].cluster_id << ": nrmse "
                      << scores.back().mean_nrmse << ", mae "
                      << scores.back().mean_mae << "\n";
        }
        base += n;
    }

    const ClusterReport report = make_cluster_report(std::move(scores));

    // 4. Assemble the deterministic report document.
    json j;
    j["schema_version"] = 1;
    j["label"] = cfg.label;
    j["master_seed"] = cfg.master_seed;
    j["config"] = config_to_json(cfg);
    json jclusters = json::array();
    for (const ClusterScore& cs : report.clusters) {
        json jmeters = json::array();
        for (const MeterScore& m : cs.meters) {
            jmeters.push_back({{"meter_id", m.meter_id},
                               {"nrmse", m.nrmse},
                               {"mae", m.mae}});
        }
        jclusters.push_back({{"cluster_id", cs.cluster_id},
                             {"nrmse", cs.mean_nrmse},
                             {"mae", cs.mean_mae},
                             {"meters", jmeters}});
    }
    j["results"] = {{"overall",
                     {{"nrmse", report.overall_nrmse},
                      {"mae", report.overall_mae}}},
                    {"clusters", jclusters}};

    const std::uint64_t dense_bytes = 4 * std::uint64_t(param_count);
    json comm;
    comm["rounds"] = total_rounds;
    comm["bytes_up"] = bytes_up;
    comm["bytes_down"] = bytes_down;
    comm["dense_bytes_per_update"] = dense_bytes;
    if (total_uploads > 0) {
        const double mean_payload =
            double(bytes_up) / double(total_uploads);
        comm["mean_payload_bytes_per_update"] = mean_payload;
        comm["compression_ratio"] =
            mean_payload > 0.0 ? double(dense_bytes) / mean_payload : 0.0;
    } else {
        comm["mean_payload_bytes_per_update"] = nullptr;
        comm["compression_ratio"] = nullptr;
    }
    j["communication"] = comm;

    ExperimentOutput out;
    out.report = std::move(j);
    out.round_log = round_log_csv(log);
    out.wall_seconds = std::chrono::duration<double>(
                           std::chrono::steady_clock::now() - t0)
                           .count();
    return out;
}

void write_experiment_files(const ExperimentOutput& out,
                            const std::string& dir) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream f(dir + "/report.json");
        if (!f) throw DataError("cannot write '" + dir + "/report.json'");
        f << out.report.dump(2) << "\n";
    }
    {
        std::ofstream f(dir + "/rounds.csv");
        if (!f) throw DataError("cannot write '" + dir + "/rounds.csv'");
        f << out.round_log;
    }
    {
        std::ofstream f(dir + "/run.meta.json");
        if (!f) throw DataError("cannot write '" + dir + "/run.meta.json'");
        f << json{{"wall_seconds", out.wall_seconds}}.dump(2) << "\n";
    }
}

void run_generate(const ExperimentConfig& cfg, const std::string& dir) {
    if (cfg.data.source != "synthetic") {
        throw ConfigError("generate requires data.source == 'synthetic'");
    }
    cfg.validate();
    const SyntheticCohort cohort =
        generate_synthetic(cfg.data.clusters, cfg.data.meters_per_cluster,
                           cfg.data.days, cfg.master_seed);
    std::filesystem::create_directories(dir);
    write_csv_file(cohort.series, dir + "/meters.csv");
    json manifest;
    manifest["schema_version"] = 1;
    manifest["master_seed"] = cfg.master_seed;
    manifest["clusters"] = cfg.data.clusters;
    manifest["meters_per_cluster"] = cfg.data.meters_per_cluster;
    manifest["days"] = cfg.data.days;
    manifest["points_per_meter"] = cfg.data.days * kSlotsPerDay;
    manifest["csv"] = "meters.csv";
    std::ofstream f(dir + "/manifest.json");
    if (!f) throw DataError("cannot write '" + dir + "/manifest.json'");
    f << manifest.dump(2) << "\n";
}

json load_report_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open report file '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw DataError("report file '" + path + "' is not valid JSON: " +
                        e.what());
    }
    if (!j.is_object() || !j.contains("label") || !j.contains("results") ||
        !j.at("results").contains("overall") ||
        !j.contains("communication")) {
        throw DataError("report file '" + path +
                        "' is missing label/results/communication");
    }
    return j;
}

namespace {

struct CompareRow {
    std::string label;
    double nrmse = 0.0;
    double mae = 0.0;
    std::uint64_t bytes_up = 0;
    std::uint64_t bytes_down = 0;
};

std::vector<CompareRow> compare_rows(const std::vector<json>& reports) {
    if (reports.empty()) throw DataError("nothing to compare");
    std::vector<CompareRow> rows;
    rows.reserve(reports.size());
    for (const json& r : reports) {
        try {
            CompareRow row;
            row.label = r.at("label").get<std::string>();
            const json& overall = r.at("results").at("overall");
            row.nrmse = overall.at("nrmse").get<double>();
            row.mae = overall.at("mae").get<double>();
            row.bytes_up = r.at("communication").at("bytes_up")
                               .get<std::uint64_t>();
            row.bytes_down = r.at("communication").at("bytes_down")
                                 .get<std::uint64_t>();
            rows.push_back(std::move(row));
        } catch (const json::exception& e) {
            throw DataError(std::string("malformed report: ") + e.what());
        }
    }
    return rows;
}

}  // namespace

std::string compare_reports_text(const std::vector<json>& reports) {
    const std::vector<CompareRow> rows = compare_rows(reports);
    std::size_t label_width = 5;
    for (const CompareRow& r : rows) {
        label_width = std::max(label_width, r.label.size());
    }
    std::ostringstream out;
    out << std::left;
    out.width(std::streamsize(label_width + 2));
    out << "label";
    out << "nrmse       mae         bytes_up      d_nrmse     d_mae\n";
    for (const CompareRow& r : rows) {
        out.width(std::streamsize(label_width + 2));
        out << r.label;
        out << format_double(r.nrmse, "%-12.6f")
            << format_double(r.mae, "%-12.6f");
        char bytes[32];
        std::snprintf(bytes, sizeof bytes, "%-14llu",
                      (unsigned long long)r.bytes_up);
        out << bytes;
        out << format_double(r.nrmse - rows.front().nrmse, "%-+12.6f")
            << format_double(r.mae - rows.front().mae, "%-+.6f") << "\n";
    }
    return out.str();
}

std::string compare_reports_csv(const std::vector<json>& reports) {
    const std::vector<CompareRow> rows = compare_rows(reports);
    std::string out =
        "label,nrmse,mae,bytes_up,bytes_down,delta_nrmse,delta_mae\n";
    char buf[256];
    for (const CompareRow& r : rows) {
        std::snprintf(buf, sizeof buf, "%s,%.17g,%.17g,%llu,%llu,%.17g,%.17g\n",
                      r.label.c_str(), r.nrmse, r.mae,
                      (unsigned long long)r.bytes_up,
                      (unsigned long long)r.bytes_down,
                      r.nrmse - rows.front().nrmse, r.mae - rows.front().mae);
        out += buf;
    }
    return out;
}

}  // namespace fedmeter
