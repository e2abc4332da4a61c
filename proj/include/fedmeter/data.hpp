#ifndef FEDMETER_DATA_HPP
#define FEDMETER_DATA_HPP

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "fedmeter/lstm.hpp"
#include "fedmeter/numerics.hpp"
#include "fedmeter/rng.hpp"

namespace fedmeter {

inline constexpr std::size_t kSlotsPerDay = 48;  // 30-minute sampling

// One day of half-hourly readings; NaN marks a missing slot.
struct DayReadings {
    std::int64_t day = 0;
    std::array<double, kSlotsPerDay> kwh;

    DayReadings();
    explicit DayReadings(std::int64_t day_index);

    std::size_t present() const;
    bool complete_and_valid() const;  // all 48 present, finite, >= 0
};

// Half-hourly consumption series of one meter, grouped by day.
struct MeterSeries {
    std::string meter_id;
    std::vector<DayReadings> days;  // ordered by day index

    std::int64_t start_day() const { return days.empty() ? 0 : days.front().day; }
    std::size_t day_count() const { return days.size(); }

    // Present values ordered by (day, slot).
    Vector readings() const;
};

struct Cluster {
    std::uint32_t cluster_id = 0;
    std::vector<std::string> meter_ids;
};

// Reads series from CSV with header `meter_id,day_index,halfhour_slot,kwh`
// (slot in 1..48). Returns one series per distinct meter, sorted by
// meter id. An empty stream yields an empty list.
std::vector<MeterSeries> ingest_csv(std::istream& in);
std::vector<MeterSeries> ingest_csv_file(const std::string& path);

// Writes the same schema; values round-trip bit-exactly through ingest.
void write_csv(std::span<const MeterSeries> series, std::ostream& out);
void write_csv_file(std::span<const MeterSeries> series,
                    const std::string& path);

// Drops every day that is incomplete or contains a negative or
// non-finite reading. Idempotent.
MeterSeries clean(const MeterSeries& series);

// Train/test split with min-max bounds computed on the train part only.
struct SplitSeries {
    Vector train;  // raw kWh, train_days * 48 values
    Vector test;   // raw kWh, test_days * 48 values
    double norm_min = 0.0;
    double norm_max = 0.0;

    double normalize(double x) const;
    double denormalize(double u) const;
    Vector normalized_train() const;
    Vector normalized_test() const;
};

SplitSeries split_normalize(const MeterSeries& series, std::size_t train_days,
                            std::size_t test_days);

// Sliding windows over a normalized series: window k covers values
// [k, k+window) with target at k+window; count == len - window.
struct WindowSet {
    Vector series;
    std::size_t window = 0;

    std::size_t count() const { return series.size() - window; }
    TrainingWindow at(std::size_t k) const;
    std::vector<TrainingWindow> all() const;
};

WindowSet make_windows(Vector normalized_series, std::size_t window);

// Synthetic household shape: a smooth daily curve plus appliance pulses,
// weekend offset, a component shared across the meter's cluster, and
// gaussian noise, clamped at zero.
struct SyntheticProfile {
    double base_load = 0.2;
    double daily_amplitude = 0.2;
    double daily_phase = 0.0;  // slots
    double evening_peak = 0.3;
    double weekend_factor = 0.1;
    struct Motif {
        std::size_t start_slot = 0;
        std::size_t duration = 2;
        double height = 0.3;
    };
    std::vector<Motif> motifs;
    double noise_sigma = 0.05;
    double cluster_weight = 0.7;
};

SyntheticProfile draw_profile(RngStream& rng);

// Per-cluster daily component (48 slots) shared by its members.
std::vector<double> draw_cluster_shape(RngStream& rng);

MeterSeries generate_series(const std::string& meter_id,
                            const SyntheticProfile& profile,
                            std::span<const double> cluster_shape,
                            std::size_t days, RngStream noise);

struct SyntheticCohort {
    std::vector<MeterSeries> series;
    std::vector<Cluster> clusters;
};

SyntheticCohort generate_synthetic(std::size_t n_clusters,
                                   std::size_t meters_per_cluster,
                                   std::size_t days,
                                   std::uint64_t master_seed);

// Partitions meter ids (in the given order) into n contiguous,
// near-equal clusters.
std::vector<Cluster> assign_clusters(std::span<const MeterSeries> series,
                                     std::size_t n_clusters);

}  // namespace fedmeter

#endif
