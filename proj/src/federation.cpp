#include "fedmeter/federation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "fedmeter/errors.hpp"
#include "fedmeter/parallel.hpp"

namespace fedmeter {

void FedConfig::validate() const {
    if (round_granularity == 0) {
        throw ConfigError("round granularity must be >= 1 window");
    }
    if (epochs == 0) throw ConfigError("epochs must be >= 1");
    compression.validate();
}

ClientRoundResult client_round(const GlobalModel& global,
                               std::span<const TrainingWindow> segment,
                               const TrainConfig& tcfg,
                               std::uint32_t client_id) {
    ClientRoundResult out;
    out.update.client_id = client_id;
    out.update.round = global.round_index;
    out.update.sample_count = segment.size();
    if (segment.empty()) {
        out.update.delta.assign(global.params.param_count(), 0.0);
        return out;
    }

    LstmParams local = global.params;
    const SegmentResult trained = train_segment(local, segment, tcfg);
    out.mean_loss = trained.mean_loss;

    const Vector before = global.params.flatten();
    Vector after = local.flatten();
    for (std::size_t i = 0; i < after.size(); ++i) after[i] -= before[i];
    out.update.delta = std::move(after);
    return out;
}

std::vector<double> aggregation_weights(std::span<const ModelUpdate> updates,
                                        WeightMode mode) {
    if (updates.empty()) {
        throw ConfigError("cannot weight an empty update list");
    }
    std::vector<double> w(updates.size());
    if (mode == WeightMode::Uniform) {
        std::fill(w.begin(), w.end(), 1.0 / double(updates.size()));
        return w;
    }
    std::size_t total = 0;
    for (const ModelUpdate& u : updates) total += u.sample_count;
    if (total == 0) {
        std::fill(w.begin(), w.end(), 1.0 / double(updates.size()));
        return w;
    }
    for (std::size_t i = 0; i < updates.size(); ++i) {
        w[i] = double(updates[i].sample_count) / double(total);
    }
    return w;
}

namespace {

// Fixed binary reduction over [lo, hi): scheduling-independent sums.
Vector reduce_weighted(std::span<const ModelUpdate> updates,
                       std::span<const double> weights, std::size_t lo,
                       std::size_t hi) {
    if (hi - lo == 1) {
        Vector out(updates[lo].delta);
        for (double& v : out) v *= weights[lo];
        return out;
    }
    const std::size_t mid = lo + (hi - lo) / 2;
    Vector left = reduce_weighted(updates, weights, lo, mid);
    const Vector right = reduce_weighted(updates, weights, mid, hi);
    for (std::size_t i = 0; i < left.size(); ++i) left[i] += right[i];
    return left;
}

}  // namespace

Vector aggregate(std::span<const ModelUpdate> updates,
                 std::span<const double> weights) {
    if (updates.empty()) {
        throw ConfigError("cannot aggregate an empty update list");
    }
    if (weights.size() != updates.size()) {
        throw ShapeError("aggregate: " + std::to_string(updates.size()) +
                         " updates but " + std::to_string(weights.size()) +
                         " weights");
    }
    const std::size_t len = updates.front().delta.size();
    const std::uint64_t round = updates.front().round;
    for (const ModelUpdate& u : updates) {
        if (u.delta.size() != len) {
            throw ShapeError("aggregate: update from client " +
                             std::to_string(u.client_id) + " has length " +
                             std::to_string(u.delta.size()) + ", expected " +
                             std::to_string(len));
        }
        if (u.round != round) {
            throw ConfigError("aggregate: update from client " +
                              std::to_string(u.client_id) + " is for round " +
                              std::to_string(u.round) + ", expected " +
                              std::to_string(round));
        }
    }
    double sum = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0)) {
            throw ConfigError("aggregation weights must be non-negative");
        }
        sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
        throw ConfigError("aggregation weights sum to " +
                          std::to_string(sum) + ", expected 1");
    }
    return reduce_weighted(updates, weights, 0, updates.size());
}

void apply_global(GlobalModel& global, std::span<const double> delta) {
    if (delta.size() != global.params.param_count()) {
        throw ShapeError("apply_global: delta length " +
                         std::to_string(delta.size()) +
                         " does not match parameter count " +
                         std::to_string(global.params.param_count()));
    }
    global.params.add_flat(delta);
    ++global.round_index;
}

std::string round_log_csv(std::span<const RoundLogRow> rows) {
    std::string out =
        "round,epoch,client_id,local_loss,payload_bytes,cumulative_bytes\n";
    char buf[160];
    for (const RoundLogRow& r : rows) {
        std::snprintf(buf, sizeof buf, "%llu,%zu,%u,%.17g,%llu,%llu\n",
                      (unsigned long long)r.round, r.epoch, r.client_id,
                      r.local_loss, (unsigned long long)r.payload_bytes,
                      (unsigned long long)r.cumulative_bytes);
        out += buf;
    }
    return out;
}

FedRunResult run_federated(const LstmParams& init,
                           const std::vector<std::vector<TrainingWindow>>&
                               client_windows,
                           const TrainConfig& tcfg, const FedConfig& fcfg,
                           std::uint64_t master_seed, unsigned threads,
                           std::uint32_t client_id_base) {
    fcfg.validate();
    if (client_windows.empty()) {
        throw ConfigError("federation needs at least one client");
    }
    std::size_t max_windows = 0;
    for (const auto& w : client_windows) {
        max_windows = std::max(max_windows, w.size());
    }
    if (max_windows == 0) {
        throw DataError("no client has any training window");
    }

    const std::size_t n = client_windows.size();
    const std::size_t k = fcfg.round_granularity;
    const std::size_t rounds_per_epoch = (max_windows + k - 1) / k;
    const std::size_t param_len = init.param_count();

    FedRunResult result;
    result.global.params = init;
    result.log.reserve(fcfg.epochs * rounds_per_epoch * n);
    std::vector<std::uint64_t> uploaded(n, 0);

    std::vector<ModelUpdate> updates(n);
    std::vector<double> losses(n);
    std::vector<std::size_t> payload_bytes(n);

    for (std::size_t epoch = 0; epoch < fcfg.epochs; ++epoch) {
        for (std::size_t r = 0; r < rounds_per_epoch; ++r) {
            const std::uint64_t round = result.global.round_index;
            parallel_for(n, threads, [&](std::size_t c) {
                const auto& all = client_windows[c];
                const std::size_t lo = std::min(r * k, all.size());
                const std::size_t hi = std::min(lo + k, all.size());
                ClientRoundResult res = client_round(
                    result.global,
                    std::span<const TrainingWindow>(all.data() + lo, hi - lo),
                    tcfg, client_id_base + std::uint32_t(c));
                const CompressedDelta sent = compress_roundtrip(
                    res.update.delta, fcfg.compression, master_seed,
                    res.update.client_id, round);
                res.update.delta = sent.delta;
                updates[c] = std::move(res.update);
                losses[c] = res.mean_loss;
                payload_bytes[c] = sent.payload_bytes;
            });

            const std::vector<double> weights =
                aggregation_weights(updates, fcfg.weights);
            const Vector delta = aggregate(updates, weights);
            apply_global(result.global, delta);

            for (std::size_t c = 0; c < n; ++c) {
                uploaded[c] += payload_bytes[c];
                result.bytes_up += payload_bytes[c];
                result.log.push_back(RoundLogRow{
                    round, epoch, client_id_base + std::uint32_t(c),
                    losses[c], std::uint64_t(payload_bytes[c]), uploaded[c]});
            }
            result.bytes_down +=
                std::uint64_t(n) * dense_payload_bytes(param_len);
        }
    }
    return result;
}

LocalRunResult run_local_only(const LstmParams& init,
                              std::span<const TrainingWindow> windows,
                              const TrainConfig& tcfg) {
    if (windows.empty()) {
        throw DataError("local training needs at least one window");
    }
    LocalRunResult out;
    out.params = init;
    out.epoch_losses.reserve(tcfg.epochs);
    for (std::size_t epoch = 0; epoch < tcfg.epochs; ++epoch) {
        const SegmentResult res = train_segment(out.params, windows, tcfg);
        out.epoch_losses.push_back(res.mean_loss);
    }
    return out;
}

}  // namespace fedmeter
