// Acceptance suite: one pass/fail line per criterion, nonzero exit on
// any failure. Heavier checks print their measurements as indented
// detail lines above the verdict.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedmeter/compression.hpp"
#include "fedmeter/data.hpp"
#include "fedmeter/errors.hpp"
#include "fedmeter/experiment.hpp"
#include "fedmeter/federation.hpp"
#include "fedmeter/lstm.hpp"
#include "fedmeter/metrics.hpp"
#include "fedmeter/rng.hpp"

using namespace fedmeter;
using nlohmann::json;

namespace {

constexpr std::uint64_t kSeed = 20260814;

LstmParams random_params(std::size_t hidden, RngStream& rng) {
    Vector flat = init_params(hidden, 1, rng).flatten();
    for (double& v : flat) v += 0.4 * rng.uniform() - 0.2;
    return LstmParams::unflatten(flat, hidden, 1);
}

Vector random_vector(std::size_t n, RngStream& rng, double lo = -1.0,
                     double hi = 1.0) {
    Vector v(n);
    for (double& x : v) x = lo + (hi - lo) * rng.uniform();
    return v;
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        worst = std::max(worst, std::abs(a[i] - b[i]));
    }
    return worst;
}

// --- 1. analytic gradients vs central finite differences ------------------

bool check_gradients() {
    RngStream rng = RngStream::derive(kSeed, RngPurpose::Test, 1);
    const double eps = 1e-5;
    double worst = 0.0;
    int instances = 0;
    for (std::size_t hidden : {std::size_t(1), std::size_t(3)}) {
        for (std::size_t steps : {std::size_t(2), std::size_t(5)}) {
            for (int rep = 0; rep < 5; ++rep) {
                ++instances;
                const LstmParams params = random_params(hidden, rng);
                const Vector x = random_vector(steps, rng, 0.0, 1.0);
                const double target = rng.uniform();

                const Gradients grads =
                    backward(params, x, target, forward(params, x));
                const Vector analytic = grads.flatten();
                Vector flat = params.flatten();
                for (std::size_t i = 0; i < flat.size(); ++i) {
                    const double keep = flat[i];
                    flat[i] = keep + eps;
                    const double up = squared_loss(
                        forward(LstmParams::unflatten(flat, hidden, 1), x)
                            .prediction,
                        target);
                    flat[i] = keep - eps;
                    const double down = squared_loss(
                        forward(LstmParams::unflatten(flat, hidden, 1), x)
                            .prediction,
                        target);
                    flat[i] = keep;
                    const double numeric = (up - down) / (2.0 * eps);
                    const double rel =
                        std::abs(analytic[i] - numeric) /
                        std::max({std::abs(analytic[i]), std::abs(numeric),
                                  1e-4});
                    worst = std::max(worst, rel);
                }
            }
        }
    }
    std::printf("    %d instances, worst relative gradient error %.3g\n",
                instances, worst);
    return instances == 20 && worst < 1e-5;
}

// --- 2. identical clients == solo trajectory, round by round ---------------

bool check_fixed_point() {
    RngStream rng = RngStream::derive(kSeed, RngPurpose::Test, 2);
    const std::size_t window = 6, n_windows = 20, granularity = 2;
    const Vector series = random_vector(window + n_windows, rng, 0.0, 1.0);
    std::vector<TrainingWindow> windows;
    for (std::size_t k = 0; k < n_windows; ++k) {
        windows.push_back(TrainingWindow{
            std::span<const double>(series.data() + k, window),
            series[k + window]});
    }

    TrainConfig tcfg;
    tcfg.hidden_units = 4;
    tcfg.window = window;

    GlobalModel global;
    global.params =
        init_params(4, 1, RngStream::derive(kSeed, RngPurpose::ParamInit, 2));
    LstmParams solo = global.params;

    double worst = 0.0;
    for (std::size_t round = 0; round < 10; ++round) {
        const std::span<const TrainingWindow> segment(
            windows.data() + round * granularity, granularity);
        std::vector<ModelUpdate> updates;
        for (std::uint32_t c = 0; c < 4; ++c) {
            updates.push_back(
                client_round(global, segment, tcfg, c).update);
        }
        apply_global(global,
                     aggregate(updates, std::vector<double>(4, 0.25)));
        train_segment(solo, segment, tcfg);
        worst = std::max(worst, max_abs_diff(global.params.flatten(),
                                             solo.flatten()));
    }
    std::printf("    max |global - solo| over 10 rounds: %.3g\n", worst);
    return worst < 1e-12;
}

// --- 3. aggregation against a naive oracle and the mean identity -----------

bool check_aggregation() {
    RngStream rng = RngStream::derive(kSeed, RngPurpose::Test, 3);
    double worst = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t n = 2 + rng.below(7);
        const std::size_t len = 1 + rng.below(60);
        std::vector<ModelUpdate> updates(n);
        std::vector<double> weights(n);
        double total = 0.0;
        for (std::size_t c = 0; c < n; ++c) {
            updates[c].client_id = std::uint32_t(c);
            updates[c].delta = random_vector(len, rng);
            weights[c] = 0.05 + rng.uniform();
            total += weights[c];
        }
        for (double& w : weights) w /= total;

        Vector naive(len, 0.0);
        for (std::size_t c = 0; c < n; ++c) {
            for (std::size_t i = 0; i < len; ++i) {
                naive[i] += weights[c] * updates[c].delta[i];
            }
        }
        worst = std::max(worst,
                         max_abs_diff(aggregate(updates, weights), naive));
    }

    // mean(Wn) == base + mean(Wn - base) under uniform weights.
    const std::size_t len = 40, n = 5;
    const Vector base = random_vector(len, rng);
    std::vector<Vector> posts;
    std::vector<ModelUpdate> updates(n);
    for (std::size_t c = 0; c < n; ++c) {
        posts.push_back(random_vector(len, rng));
        updates[c].client_id = std::uint32_t(c);
        updates[c].delta.resize(len);
        for (std::size_t i = 0; i < len; ++i) {
            updates[c].delta[i] = posts[c][i] - base[i];
        }
    }
    const Vector agg =
        aggregate(updates, std::vector<double>(n, 1.0 / double(n)));
    double worst_identity = 0.0;
    for (std::size_t i = 0; i < len; ++i) {
        double mean = 0.0;
        for (std::size_t c = 0; c < n; ++c) mean += posts[c][i];
        mean /= double(n);
        worst_identity =
            std::max(worst_identity, std::abs(base[i] + agg[i] - mean));
    }
    std::printf("    oracle diff %.3g, mean-identity diff %.3g\n", worst,
                worst_identity);
    return worst < 1e-12 && worst_identity < 1e-12;
}

// --- 4. stochastic quantization is unbiased, endpoints deterministic -------

bool check_quantizer() {
    RngStream values_rng = RngStream::derive(kSeed, RngPurpose::Test, 4);
    const std::size_t n_values = 100, draws = 100000;

    // vec[0] and vec[n+1] pin the range to [0, 1]; the rest are the
    // values under test.
    Vector vec(n_values + 2);
    vec[0] = 0.0;
    vec[n_values + 1] = 1.0;
    for (std::size_t i = 1; i <= n_values; ++i) {
        vec[i] = 0.005 + 0.99 * values_rng.uniform();
    }

    bool ok = true;
    for (int bits : {1, 2, 4}) {
        Vector sums(vec.size(), 0.0);
        bool endpoints_exact = true;
        for (std::size_t draw = 0; draw < draws; ++draw) {
            RngStream rng = RngStream::derive(kSeed, RngPurpose::Quantize,
                                              std::uint64_t(bits), draw);
            const Vector dec = dequantize(quantize(vec, bits, rng));
            endpoints_exact = endpoints_exact && dec.front() == 0.0 &&
                              dec.back() == 1.0;
            for (std::size_t i = 0; i < vec.size(); ++i) sums[i] += dec[i];
        }
        double worst = 0.0;
        for (std::size_t i = 1; i <= n_values; ++i) {
            worst = std::max(worst,
                             std::abs(sums[i] / double(draws) - vec[i]));
        }
        std::printf("    %d-bit: worst |mean - value| %.5f (limit 0.01), "
                    "endpoints %s\n",
                    bits, worst, endpoints_exact ? "exact" : "DRIFTED");
        ok = ok && worst <= 0.01 && endpoints_exact;
    }
    return ok;
}

// --- 5. payload accounting and byte-exact bit packing ----------------------

bool check_payloads() {
    RngStream rng = RngStream::derive(kSeed, RngPurpose::Test, 5);
    bool ok = true;

    const std::size_t n = 10601;
    const Vector delta = random_vector(n, rng);
    const std::size_t dense = dense_payload_bytes(n);
    RngStream qrng = RngStream::derive(kSeed, RngPurpose::Quantize, 5);
    const UpdatePayload wire = encode_quantized(quantize(delta, 4, qrng));
    const double ratio = double(dense) / double(wire.byte_size());
    std::printf("    dense %zu B, 4-bit %zu B, ratio %.2fx\n", dense,
                wire.byte_size(), ratio);
    ok = ok && dense == 42404 && wire.byte_size() == 5311 &&
         quantized_payload_bytes(n, 4) == 5311 && ratio >= 7.9;

    // Packing: re-derive every code independently (same stochastic
    // draws), unpack them straight from the wire bytes, and demand the
    // whole round trip is exact.
    for (std::size_t len : {std::size_t(1), std::size_t(7), std::size_t(8),
                            std::size_t(9)}) {
        for (int bits : {1, 2, 4, 8}) {
            const Vector v =
                random_vector(len, rng, 0.0, 2.0);
            RngStream a = RngStream::derive(kSeed, RngPurpose::Quantize,
                                            std::uint64_t(bits), len);
            RngStream b = a;  // identical stream for the replay
            const QuantizedTensor q = quantize(v, bits, a);
            const UpdatePayload p = encode_quantized(q);
            ok = ok && p.byte_size() ==
                           2 + 8 + (len * std::size_t(bits) + 7) / 8;
            ok = ok && p.byte_size() == quantized_payload_bytes(len, bits);

            // independent replay of the quantization rule
            const double smin = double(q.s_min), smax = double(q.s_max);
            const std::uint32_t levels = std::uint32_t(1) << bits;
            const double step = (smax - smin) / double(levels - 1);
            for (std::size_t k = 0; k < len; ++k) {
                std::uint32_t expect = 0;
                if (step > 0.0) {
                    const double x = std::clamp(v[k], smin, smax);
                    const double t = (x - smin) / step;
                    const std::uint32_t cell =
                        t <= 0.0 ? 0
                                 : std::min(std::uint32_t(t), levels - 2);
                    const double lo = smin + double(cell) * step;
                    const double hi = smin + double(cell + 1) * step;
                    double frac;
                    if (x <= lo) frac = 0.0;
                    else if (x >= hi) frac = 1.0;
                    else frac = (x - lo) / (hi - lo);
                    expect = cell + (b.uniform() < frac ? 1 : 0);
                }
                // unpack directly from the wire body (LSB-first)
                const std::size_t bit = k * std::size_t(bits);
                std::uint32_t got =
                    std::uint32_t(p.body[10 + bit / 8] >> (bit % 8));
                if (bit % 8 + bits > 8) {
                    got |= std::uint32_t(p.body[10 + bit / 8 + 1])
                           << (8 - bit % 8);
                }
                got &= levels - 1;
                ok = ok && got == expect;
            }
            ok = ok && decode(p) == dequantize(q);
        }
    }
    return ok;
}

// --- 6. metric oracles ------------------------------------------------------

bool check_metrics() {
    RngStream rng = RngStream::derive(kSeed, RngPurpose::Test, 6);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 2 + rng.below(120);
        Vector y = random_vector(n, rng, -5.0, 5.0);
        const Vector p = random_vector(n, rng, -5.0, 5.0);
        y[0] = -6.0;  // pin a nonzero range
        y[1] = 6.0;

        double sq = 0.0, abs_sum = 0.0, lo = y[0], hi = y[0];
        for (std::size_t i = 0; i < n; ++i) {
            sq += (y[i] - p[i]) * (y[i] - p[i]);
            abs_sum += std::abs(y[i] - p[i]);
            lo = std::min(lo, y[i]);
            hi = std::max(hi, y[i]);
        }
        const double nrmse_bf = std::sqrt(sq / double(n)) / (hi - lo);
        const double mae_bf = abs_sum / double(n);
        worst = std::max(worst, std::abs(nrmse(y, p) - nrmse_bf));
        worst = std::max(worst, std::abs(mae(y, p) - mae_bf));
    }
    const bool hand = nrmse(Vector{0.0, 2.0}, Vector{1.0, 1.0}) == 0.5 &&
                      mae(Vector{1.0, 3.0}, Vector{2.0, 2.0}) == 1.0;
    std::printf("    worst |metric - brute force| %.3g, hand cases %s\n",
                worst, hand ? "exact" : "WRONG");
    return worst < 1e-12 && hand;
}

// --- 7. federation helps; compression trends hold --------------------------

json trend_config(const std::string& label, std::uint64_t seed, bool fed,
                  const std::string& mode, double keep_fraction, int bits) {
    json j = {
        {"label", label},
        {"master_seed", seed},
        {"data",
         {{"source", "synthetic"},
          {"clusters", 2},
          {"meters_per_cluster", 8},
          {"days", 67}}},
        {"split", {{"train_days", 60}, {"test_days", 7}}},
        {"model",
         {{"hidden_units", 16},
          {"window", 48},
          {"learning_rate", 0.01},
          {"epochs", 4}}},
        {"federation",
         {{"enabled", fed},
          {"round_granularity", 48},
          {"weights", "uniform"}}},
        {"compression", json{{"mode", mode}}},
        {"output_dir", "unused"}};
    if (mode == "mask") j["compression"]["keep_fraction"] = keep_fraction;
    if (mode == "quantize") j["compression"]["bits"] = bits;
    return j;
}

bool check_trend() {
    struct Scenario {
        const char* label;
        bool fed;
        const char* mode;
        double keep;
        int bits;
    };
    const Scenario scenarios[] = {
        {"local", false, "none", 0.0, 0},
        {"fed", true, "none", 0.0, 0},
        {"fed-quant4", true, "quantize", 0.0, 4},
        {"fed-mask10", true, "mask", 0.10, 0},
        {"fed-mask02", true, "mask", 0.02, 0},
    };
    double mean[5] = {0, 0, 0, 0, 0};
    for (int s = 0; s < 5; ++s) {
        for (std::uint64_t seed : {1, 2, 3}) {
            const ExperimentConfig cfg = config_from_json(trend_config(
                scenarios[s].label, seed, scenarios[s].fed,
                scenarios[s].mode, scenarios[s].keep, scenarios[s].bits));
            mean[s] += run_experiment(cfg, 1)
                           .report.at("results")
                           .at("overall")
                           .at("nrmse")
                           .get<double>() /
                       3.0;
        }
        std::printf("    mean nrmse %-10s %.5f\n", scenarios[s].label,
                    mean[s]);
    }
    const bool fed_helps = mean[1] <= mean[0];
    const bool quant_close = mean[2] <= mean[1] + 0.02;
    const bool mask_ordered = mean[4] >= mean[3];
    std::printf("    fed<=local %s, quant4<=fed+0.02 %s, "
                "mask02>=mask10 %s\n",
                fed_helps ? "yes" : "NO", quant_close ? "yes" : "NO",
                mask_ordered ? "yes" : "NO");
    return fed_helps && quant_close && mask_ordered;
}

// --- 8. thread count changes no output byte --------------------------------

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

bool run_cli(const std::string& cli, const std::filesystem::path& cfg,
             const std::filesystem::path& out, int threads) {
    std::ostringstream cmd;
    cmd << "\"" << cli << "\" run --config \"" << cfg.string()
        << "\" --out \"" << out.string() << "\" --threads " << threads
        << " >/dev/null 2>&1";
    return std::system(cmd.str().c_str()) == 0;
}

bool check_determinism() {
    const char* cli = std::getenv("FEDMETER_CLI");
    if (cli == nullptr) {
        std::printf("    FEDMETER_CLI is not set\n");
        return false;
    }
    const std::filesystem::path dir =
        std::filesystem::temp_directory_path() / "fedmeter_acceptance_det";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);

    json j = trend_config("determinism", 11, true, "quantize", 0.0, 4);
    j["data"]["meters_per_cluster"] = 4;
    j["data"]["days"] = 10;
    j["split"] = {{"train_days", 8}, {"test_days", 2}};
    j["model"]["hidden_units"] = 8;
    std::ofstream(dir / "cfg.json") << j.dump(2) << "\n";
    json j2 = j;
    j2["master_seed"] = 12;
    std::ofstream(dir / "cfg2.json") << j2.dump(2) << "\n";

    if (!run_cli(cli, dir / "cfg.json", dir / "t1", 1) ||
        !run_cli(cli, dir / "cfg.json", dir / "t8", 8) ||
        !run_cli(cli, dir / "cfg2.json", dir / "seed2", 8)) {
        std::printf("    cli runs failed\n");
        return false;
    }
    const std::string rep1 = slurp(dir / "t1" / "report.json");
    const std::string rep8 = slurp(dir / "t8" / "report.json");
    const std::string log1 = slurp(dir / "t1" / "rounds.csv");
    const std::string log8 = slurp(dir / "t8" / "rounds.csv");
    const std::string rep_other = slurp(dir / "seed2" / "report.json");
    const bool identical = !rep1.empty() && rep1 == rep8 &&
                           !log1.empty() && log1 == log8;
    const bool seeds_differ = rep_other != rep1;
    std::printf("    report %zu B, log %zu B; threads 1 vs 8 %s, "
                "other seed %s\n",
                rep1.size(), log1.size(),
                identical ? "identical" : "DIFFER",
                seeds_differ ? "differs" : "IDENTICAL");
    return identical && seeds_differ;
}

// --- 9. csv round trip, cleaning, split sizes -------------------------------

bool check_data_pipeline() {
    const std::filesystem::path dir =
        std::filesystem::temp_directory_path() / "fedmeter_acceptance_data";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);

    const SyntheticCohort cohort = generate_synthetic(2, 3, 40, kSeed);
    write_csv_file(cohort.series, (dir / "meters.csv").string());
    const std::vector<MeterSeries> back =
        ingest_csv_file((dir / "meters.csv").string());
    bool round_trip = back.size() == cohort.series.size();
    for (std::size_t m = 0; round_trip && m < back.size(); ++m) {
        round_trip = back[m].meter_id == cohort.series[m].meter_id &&
                     back[m].days.size() == cohort.series[m].days.size();
        for (std::size_t d = 0; round_trip && d < back[m].days.size(); ++d) {
            round_trip = back[m].days[d].day == cohort.series[m].days[d].day &&
                         back[m].days[d].kwh == cohort.series[m].days[d].kwh;
        }
    }

    // Cleaning drops exactly the corrupted days.
    MeterSeries dirty = cohort.series[0];
    dirty.days[3].kwh[7] = std::nan("");
    dirty.days[5].kwh[0] = -1.0;
    dirty.days[8].kwh[47] = std::numeric_limits<double>::infinity();
    const MeterSeries cleaned = clean(dirty);
    bool cleaning = cleaned.days.size() == dirty.days.size() - 3;
    std::size_t d_clean = 0;
    for (std::size_t d = 0; cleaning && d < dirty.days.size(); ++d) {
        if (d == 3 || d == 5 || d == 8) continue;
        cleaning = cleaned.days[d_clean].day == dirty.days[d].day &&
                   cleaned.days[d_clean].kwh == dirty.days[d].kwh;
        ++d_clean;
    }

    // A 533-day series splits 503/30 into 24,144 + 1,440 points.
    const SyntheticCohort one = generate_synthetic(1, 1, 533, kSeed);
    const SplitSeries split = split_normalize(one.series[0], 503, 30);
    const bool sizes = one.series[0].readings().size() == 25584 &&
                       split.train.size() == 24144 &&
                       split.test.size() == 1440;
    std::printf("    round trip %s, cleaning %s, split %zu/%zu\n",
                round_trip ? "exact" : "BROKEN",
                cleaning ? "exact" : "BROKEN", split.train.size(),
                split.test.size());
    return round_trip && cleaning && sizes;
}

struct Criterion {
    const char* name;
    bool (*run)();
    double limit_seconds;  // 0 = no limit enforced
};

}  // namespace

int main() {
    const Criterion criteria[] = {
        {"lstm gradients match central finite differences",
         check_gradients, 60.0},
        {"identical clients pin the global to the solo trajectory",
         check_fixed_point, 0.0},
        {"aggregation matches the naive oracle and the mean identity",
         check_aggregation, 0.0},
        {"stochastic quantization is unbiased with exact endpoints",
         check_quantizer, 120.0},
        {"payload accounting and bit packing are byte-exact",
         check_payloads, 0.0},
        {"error metrics match brute-force recomputation",
         check_metrics, 0.0},
        {"federated averaging beats local; compression trends hold",
         check_trend, 600.0},
        {"thread count changes no output byte",
         check_determinism, 0.0},
        {"csv round trip, cleaning and split sizes are exact",
         check_data_pipeline, 0.0},
    };

    int failures = 0;
    int index = 0;
    for (const Criterion& c : criteria) {
        ++index;
        const auto t0 = std::chrono::steady_clock::now();
        bool ok = c.run();
        const double sec = std::chrono::duration<double>(
                               std::chrono::steady_clock::now() - t0)
                               .count();
        if (c.limit_seconds > 0.0 && sec >= c.limit_seconds) ok = false;
        std::printf("criterion %d: %s ... %s (%.1fs)\n", index, c.name,
                    ok ? "PASS" : "FAIL", sec);
        std::fflush(stdout);
        failures += ok ? 0 : 1;
    }
    if (failures > 0) {
        std::printf("%d of 9 criteria failed\n", failures);
        return 1;
    }
    std::printf("all 9 criteria passed\n");
    return 0;
}
