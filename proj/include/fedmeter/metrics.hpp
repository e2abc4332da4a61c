#ifndef FEDMETER_METRICS_HPP
#define FEDMETER_METRICS_HPP

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace fedmeter {

// Root-mean-squared error divided by the range of the actuals.
// Throws on mismatched/empty inputs or constant actuals (zero range).
double nrmse(std::span<const double> actual, std::span<const double> forecast);

double mae(std::span<const double> actual, std::span<const double> forecast);

struct MeterScore {
    std::string meter_id;
    double nrmse = 0.0;
    double mae = 0.0;
};

struct ClusterScore {
    std::uint32_t cluster_id = 0;
    std::vector<MeterScore> meters;
    double mean_nrmse = 0.0;  // arithmetic mean over meters
    double mean_mae = 0.0;
};

struct ClusterReport {
    std::vector<ClusterScore> clusters;
    double overall_nrmse = 0.0;  // mean of the cluster means
    double overall_mae = 0.0;
};

ClusterScore score_cluster(std::uint32_t cluster_id,
                           std::vector<MeterScore> meters);

ClusterReport make_cluster_report(std::vector<ClusterScore> clusters);

}  // namespace fedmeter

#endif
