#include "fedmeter/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <numbers>
#include <ostream>
#include <sstream>

#include "fedmeter/errors.hpp"

namespace fedmeter {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

[[noreturn]] void row_error(std::size_t line, const std::string& what) {
    throw DataError("csv line " + std::to_string(line) + ": " + what);
}

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string::npos) {
            fields.push_back(line.substr(start));
            return fields;
        }
        fields.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
}

std::int64_t parse_int(const std::string& s, std::size_t line,
                       const char* what) {
    if (s.empty()) row_error(line, std::string("empty ") + what);
    char* end = nullptr;
    errno = 0;
    const long long v = std::strtoll(s.c_str(), &end, 10);
    if (errno != 0 || end != s.c_str() + s.size()) {
        row_error(line, std::string("bad ") + what + " '" + s + "'");
    }
    return v;
}

double parse_kwh(const std::string& s, std::size_t line) {
    if (s.empty()) row_error(line, "empty kwh");
    char* end = nullptr;
    errno = 0;
    const double v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size()) {
        row_error(line, "non-numeric kwh '" + s + "'");
    }
    (void)v;
    return v;
}

std::string format_kwh(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

double smooth_daily(double slot, double phase) {
    // One full cycle per day, range [0, 1].
    const double arg =
        2.0 * std::numbers::pi * (slot - phase) / double(kSlotsPerDay);
    return 0.5 * (1.0 + std::sin(arg));
}

double evening_bump(double slot) {
    // Peak around 18:00 (slot 36), stddev ~90 minutes.
    const double d = slot - 36.0;
    return std::exp(-d * d / (2.0 * 3.0 * 3.0));
}

bool is_weekend(std::int64_t day) {
    const std::int64_t w = day % 7;
    return w == 5 || w == 6;
}

}  // namespace

DayReadings::DayReadings() { kwh.fill(kNaN); }

DayReadings::DayReadings(std::int64_t day_index) : day(day_index) {
    kwh.fill(kNaN);
}

std::size_t DayReadings::present() const {
    std::size_t n = 0;
    for (double v : kwh) {
        if (!std::isnan(v)) ++n;
    }
    return n;
}

bool DayReadings::complete_and_valid() const {
    for (double v : kwh) {
        if (!std::isfinite(v) || v < 0.0) return false;
    }
    return true;
}

Vector MeterSeries::readings() const {
    Vector out;
    out.reserve(days.size() * kSlotsPerDay);
    for (const DayReadings& d : days) {
        for (double v : d.kwh) {
            if (!std::isnan(v)) out.push_back(v);
        }
    }
    return out;
}

std::vector<MeterSeries> ingest_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) return {};
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "meter_id,day_index,halfhour_slot,kwh") {
        throw DataError("csv line 1: expected header "
                        "'meter_id,day_index,halfhour_slot,kwh', got '" +
                        line + "'");
    }

    // meter -> day -> readings, keyed for dedup; emitted sorted by id.
    std::map<std::string, std::map<std::int64_t, DayReadings>> meters;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::vector<std::string> f = split_fields(line);
        if (f.size() != 4) {
            row_error(line_no, "expected 4 fields, got " +
                                   std::to_string(f.size()));
        }
        if (f[0].empty()) row_error(line_no, "empty meter_id");
        const std::int64_t day = parse_int(f[1], line_no, "day_index");
        if (day < 0) row_error(line_no, "negative day_index");
        const std::int64_t slot = parse_int(f[2], line_no, "halfhour_slot");
        if (slot < 1 || slot > std::int64_t(kSlotsPerDay)) {
            row_error(line_no, "halfhour_slot out of range 1..48: '" + f[2] +
                                   "'");
        }
        const double kwh = parse_kwh(f[3], line_no);

        auto& by_day = meters[f[0]];
        auto [it, fresh] = by_day.try_emplace(day, DayReadings(day));
        double& cell = it->second.kwh[std::size_t(slot - 1)];
        if (!fresh && !std::isnan(cell)) {
            row_error(line_no, "duplicate reading for meter '" + f[0] +
                                   "' day " + std::to_string(day) + " slot " +
                                   std::to_string(slot));
        }
        cell = kwh;
    }

    std::vector<MeterSeries> out;
    out.reserve(meters.size());
    for (auto& [id, by_day] : meters) {
        MeterSeries s;
        s.meter_id = id;
        s.days.reserve(by_day.size());
        for (auto& [day, readings] : by_day) s.days.push_back(readings);
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<MeterSeries> ingest_csv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open csv file '" + path + "'");
    return ingest_csv(in);
}

void write_csv(std::span<const MeterSeries> series, std::ostream& out) {
    out << "meter_id,day_index,halfhour_slot,kwh\n";
    for (const MeterSeries& s : series) {
        for (const DayReadings& d : s.days) {
            for (std::size_t slot = 0; slot < kSlotsPerDay; ++slot) {
                const double v = d.kwh[slot];
                if (std::isnan(v)) continue;
                out << s.meter_id << ',' << d.day << ',' << (slot + 1) << ','
                    << format_kwh(v) << '\n';
            }
        }
    }
    if (!out) throw DataError("csv write failed");
}

void write_csv_file(std::span<const MeterSeries> series,
                    const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open csv file '" + path +
                              "' for writing");
    write_csv(series, out);
    out.flush();
    if (!out) throw DataError("csv write failed for '" + path + "'");
}

MeterSeries clean(const MeterSeries& series) {
    MeterSeries out;
    out.meter_id = series.meter_id;
    out.days.reserve(series.days.size());
    for (const DayReadings& d : series.days) {
        if (d.complete_and_valid()) out.days.push_back(d);
    }
    return out;
}

double SplitSeries::normalize(double x) const {
    if (norm_max > norm_min) return (x - norm_min) / (norm_max - norm_min);
    return 0.5;
}

double SplitSeries::denormalize(double u) const {
    return norm_min + u * (norm_max - norm_min);
}

Vector SplitSeries::normalized_train() const {
    Vector out(train.size());
    for (std::size_t i = 0; i < train.size(); ++i) out[i] = normalize(train[i]);
    return out;
}

Vector SplitSeries::normalized_test() const {
    Vector out(test.size());
    for (std::size_t i = 0; i < test.size(); ++i) out[i] = normalize(test[i]);
    return out;
}

SplitSeries split_normalize(const MeterSeries& series, std::size_t train_days,
                            std::size_t test_days) {
    if (train_days == 0 || test_days == 0) {
        throw ConfigError("split requires train_days >= 1 and test_days >= 1");
    }
    const Vector flat = series.readings();
    const std::size_t need = (train_days + test_days) * kSlotsPerDay;
    if (flat.size() < need) {
        throw DataError("meter '" + series.meter_id + "' has " +
                        std::to_string(flat.size()) + " readings, needs " +
                        std::to_string(need) + " for a " +
                        std::to_string(train_days) + "+" +
                        std::to_string(test_days) + " day split");
    }

    SplitSeries out;
    const std::size_t n_train = train_days * kSlotsPerDay;
    out.train.assign(flat.begin(), flat.begin() + long(n_train));
    out.test.assign(flat.begin() + long(n_train),
                    flat.begin() + long(n_train + test_days * kSlotsPerDay));
    out.norm_min = *std::min_element(out.train.begin(), out.train.end());
    out.norm_max = *std::max_element(out.train.begin(), out.train.end());
    return out;
}

TrainingWindow WindowSet::at(std::size_t k) const {
    return TrainingWindow{
        std::span<const double>(series.data() + k, window),
        series[k + window]};
}

std::vector<TrainingWindow> WindowSet::all() const {
    std::vector<TrainingWindow> out;
    out.reserve(count());
    for (std::size_t k = 0; k < count(); ++k) out.push_back(at(k));
    return out;
}

WindowSet make_windows(Vector normalized_series, std::size_t window) {
    if (window == 0) throw ConfigError("window length must be >= 1");
    if (normalized_series.size() < window + 1) {
        throw DataError("series of length " +
                        std::to_string(normalized_series.size()) +
                        " too short for window " + std::to_string(window) +
                        " (needs at least " + std::to_string(window + 1) +
                        " values)");
    }
    WindowSet set;
    set.series = std::move(normalized_series);
    set.window = window;
    return set;
}

// Members of a cluster share most of their mean shape (the premise of
// clustering similar households); individual structure stays small
// relative to the shared component and the per-reading noise.
SyntheticProfile draw_profile(RngStream& rng) {
    SyntheticProfile p;
    p.base_load = 0.05 + 0.25 * rng.uniform();
    p.daily_amplitude = 0.01 + 0.02 * rng.uniform();
    p.daily_phase = 48.0 * rng.uniform();
    p.evening_peak = 0.02 + 0.03 * rng.uniform();
    p.weekend_factor = 0.02 * rng.uniform();
    SyntheticProfile::Motif motif;
    motif.start_slot = std::size_t(rng.below(kSlotsPerDay));
    motif.duration = 2 + std::size_t(rng.below(5));
    motif.height = 0.02 + 0.03 * rng.uniform();
    p.motifs.push_back(motif);
    p.noise_sigma = 0.20 + 0.10 * rng.uniform();
    p.cluster_weight = 0.95 + 0.10 * rng.uniform();
    return p;
}

std::vector<double> draw_cluster_shape(RngStream& rng) {
    const double amp = 0.7 + 0.3 * rng.uniform();
    const double phase = 48.0 * rng.uniform();
    const double peak_slot = 30.0 + 10.0 * rng.uniform();
    const double peak_amp = 0.6 + 0.3 * rng.uniform();
    std::vector<double> shape(kSlotsPerDay);
    for (std::size_t s = 0; s < kSlotsPerDay; ++s) {
        const double d = double(s) - peak_slot;
        shape[s] = amp * smooth_daily(double(s), phase) +
                   peak_amp * std::exp(-d * d / (2.0 * 4.0 * 4.0));
    }
    return shape;
}

MeterSeries generate_series(const std::string& meter_id,
                            const SyntheticProfile& profile,
                            std::span<const double> cluster_shape,
                            std::size_t days, RngStream noise) {
    if (cluster_shape.size() != kSlotsPerDay) {
        throw ShapeError("cluster shape must have 48 slots, got " +
                         std::to_string(cluster_shape.size()));
    }
    if (days == 0) throw ConfigError("cannot generate a 0-day series");

    MeterSeries out;
    out.meter_id = meter_id;
    out.days.reserve(days);
    for (std::size_t day = 0; day < days; ++day) {
        DayReadings d(static_cast<std::int64_t>(day));
        for (std::size_t slot = 0; slot < kSlotsPerDay; ++slot) {
            double v = profile.base_load;
            v += profile.daily_amplitude *
                 smooth_daily(double(slot), profile.daily_phase);
            v += profile.evening_peak * evening_bump(double(slot));
            if (is_weekend(std::int64_t(day))) {
                v += profile.weekend_factor *
                     smooth_daily(double(slot), profile.daily_phase + 6.0);
            }
            for (const SyntheticProfile::Motif& m : profile.motifs) {
                if (slot >= m.start_slot && slot < m.start_slot + m.duration) {
                    v += m.height;
                }
            }
            v += profile.cluster_weight * cluster_shape[slot];
            v += profile.noise_sigma * noise.normal();
            d.kwh[slot] = std::max(0.0, v);
        }
        out.days.push_back(d);
    }
    return out;
}

SyntheticCohort generate_synthetic(std::size_t n_clusters,
                                   std::size_t meters_per_cluster,
                                   std::size_t days,
                                   std::uint64_t master_seed) {
    if (n_clusters == 0 || meters_per_cluster == 0) {
        throw ConfigError("synthetic cohort needs at least 1 cluster and "
                          "1 meter per cluster");
    }
    if (days == 0) throw ConfigError("synthetic cohort needs at least 1 day");

    const std::size_t total = n_clusters * meters_per_cluster;
    int width = 1;
    for (std::size_t v = total > 0 ? total - 1 : 0; v >= 10; v /= 10) ++width;
    if (width < 4) width = 4;

    SyntheticCohort cohort;
    cohort.series.reserve(total);
    cohort.clusters.reserve(n_clusters);
    std::size_t meter_index = 0;
    for (std::size_t c = 0; c < n_clusters; ++c) {
        RngStream shape_rng =
            RngStream::derive(master_seed, RngPurpose::ClusterShape, c);
        const std::vector<double> shape = draw_cluster_shape(shape_rng);
        Cluster cluster;
        cluster.cluster_id = std::uint32_t(c);
        for (std::size_t m = 0; m < meters_per_cluster; ++m, ++meter_index) {
            char id[24];
            std::snprintf(id, sizeof id, "m%0*zu", width, meter_index);
            RngStream profile_rng = RngStream::derive(
                master_seed, RngPurpose::SyntheticProfile, meter_index);
            const SyntheticProfile profile = draw_profile(profile_rng);
            RngStream noise_rng = RngStream::derive(
                master_seed, RngPurpose::SyntheticNoise, meter_index);
            cohort.series.push_back(
                generate_series(id, profile, shape, days, noise_rng));
            cluster.meter_ids.push_back(id);
        }
        cohort.clusters.push_back(std::move(cluster));
    }
    return cohort;
}

std::vector<Cluster> assign_clusters(std::span<const MeterSeries> series,
                                     std::size_t n_clusters) {
    if (n_clusters == 0) throw ConfigError("cluster count must be >= 1");
    if (series.size() < n_clusters) {
        throw DataError("cannot split " + std::to_string(series.size()) +
                        " meters into " + std::to_string(n_clusters) +
                        " clusters");
    }
    const std::size_t base = series.size() / n_clusters;
    const std::size_t extra = series.size() % n_clusters;
    std::vector<Cluster> out;
    out.reserve(n_clusters);
    std::size_t next = 0;
    for (std::size_t c = 0; c < n_clusters; ++c) {
        Cluster cluster;
        cluster.cluster_id = std::uint32_t(c);
        const std::size_t size = base + (c < extra ? 1 : 0);
        for (std::size_t i = 0; i < size; ++i, ++next) {
            cluster.meter_ids.push_back(series[next].meter_id);
        }
        out.push_back(std::move(cluster));
    }
    return out;
}

}  // namespace fedmeter
