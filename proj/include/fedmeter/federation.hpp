#ifndef FEDMETER_FEDERATION_HPP
#define FEDMETER_FEDERATION_HPP

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fedmeter/compression.hpp"
#include "fedmeter/lstm.hpp"
#include "fedmeter/numerics.hpp"

namespace fedmeter {

struct GlobalModel {
    LstmParams params;
    std::uint64_t round_index = 0;  // completed aggregations
};

// Client upload: its post-training weights minus the broadcast global.
struct ModelUpdate {
    std::uint32_t client_id = 0;
    std::uint64_t round = 0;
    Vector delta;
    std::size_t sample_count = 0;  // windows trained this round
};

enum class WeightMode { Uniform, SampleProportional };

struct FedConfig {
    std::size_t round_granularity = 48;  // windows trained per round
    WeightMode weights = WeightMode::Uniform;
    std::size_t epochs = 4;
    CompressionConfig compression;

    void validate() const;
};

struct ClientRoundResult {
    ModelUpdate update;
    double mean_loss = 0.0;
};

// One client round: copy the broadcast weights, run SGD over the
// segment, upload weights-after minus weights-before. An empty segment
// yields a zero delta with sample_count 0.
ClientRoundResult client_round(const GlobalModel& global,
                               std::span<const TrainingWindow> segment,
                               const TrainConfig& tcfg,
                               std::uint32_t client_id);

// Aggregation weights for one round of updates. Uniform: 1/N each.
// SampleProportional: sample_count / total (uniform when the round saw
// no samples at all).
std::vector<double> aggregation_weights(std::span<const ModelUpdate> updates,
                                        WeightMode mode);

// Weighted sum of the deltas via a fixed binary reduction tree, so the
// result is independent of scheduling. Weights must sum to 1 (1e-9).
Vector aggregate(std::span<const ModelUpdate> updates,
                 std::span<const double> weights);

void apply_global(GlobalModel& global, std::span<const double> delta);

struct RoundLogRow {
    std::uint64_t round = 0;
    std::size_t epoch = 0;
    std::uint32_t client_id = 0;
    double local_loss = 0.0;
    std::uint64_t payload_bytes = 0;
    std::uint64_t cumulative_bytes = 0;  // this client's uploads so far
};

std::string round_log_csv(std::span<const RoundLogRow> rows);

struct FedRunResult {
    GlobalModel global;
    std::vector<RoundLogRow> log;
    std::uint64_t bytes_up = 0;    // sum of client upload payloads
    std::uint64_t bytes_down = 0;  // dense broadcast to every client
};

// FedAvg over fixed clients with full participation. Per epoch the
// clients sweep their windows in segments of round_granularity; rounds
// per epoch follow the client with the most windows (shorter clients
// contribute zero deltas once exhausted).
FedRunResult run_federated(const LstmParams& init,
                           const std::vector<std::vector<TrainingWindow>>&
                               client_windows,
                           const TrainConfig& tcfg, const FedConfig& fcfg,
                           std::uint64_t master_seed, unsigned threads,
                           std::uint32_t client_id_base = 0);

struct LocalRunResult {
    LstmParams params;
    std::vector<double> epoch_losses;
};

// Baseline without aggregation: the same SGD sweep, kept on-device.
LocalRunResult run_local_only(const LstmParams& init,
                              std::span<const TrainingWindow> windows,
                              const TrainConfig& tcfg);

}  // namespace fedmeter

#endif
