#include "fedmeter/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "fedmeter/errors.hpp"
#include "fedmeter/numerics.hpp"

namespace fedmeter {

namespace {

void check_pair(std::span<const double> actual,
                std::span<const double> forecast, const char* where) {
    if (actual.size() != forecast.size()) {
        throw ShapeError(std::string(where) + ": actuals (" +
                         std::to_string(actual.size()) + ") and forecasts (" +
                         std::to_string(forecast.size()) + ") differ in size");
    }
    if (actual.empty()) {
        throw DataError(std::string(where) + ": empty series");
    }
    if (!all_finite(actual) || !all_finite(forecast)) {
        throw NumericError(std::string(where) + ": non-finite value");
    }
}

}  // namespace

double nrmse(std::span<const double> actual,
             std::span<const double> forecast) {
    check_pair(actual, forecast, "nrmse");
    const auto [lo, hi] = std::minmax_element(actual.begin(), actual.end());
    const double range = *hi - *lo;
    if (range <= 0.0) {
        throw NumericError("nrmse: actuals are constant (zero range)");
    }
    double sum_sq = 0.0;
    for (std::size_t i = 0; i < actual.size(); ++i) {
        const double e = forecast[i] - actual[i];
        sum_sq += e * e;
    }
    return std::sqrt(sum_sq / double(actual.size())) / range;
}

double mae(std::span<const double> actual, std::span<const double> forecast) {
    check_pair(actual, forecast, "mae");
    double sum = 0.0;
    for (std::size_t i = 0; i < actual.size(); ++i) {
        sum += std::abs(forecast[i] - actual[i]);
    }
    return sum / double(actual.size());
}

ClusterScore score_cluster(std::uint32_t cluster_id,
                           std::vector<MeterScore> meters) {
    if (meters.empty()) {
        throw DataError("cluster " + std::to_string(cluster_id) +
                        " has no scored meters");
    }
    ClusterScore score;
    score.cluster_id = cluster_id;
    score.meters = std::move(meters);
    for (const MeterScore& m : score.meters) {
        score.mean_nrmse += m.nrmse;
        score.mean_mae += m.mae;
    }
    score.mean_nrmse /= double(score.meters.size());
    score.mean_mae /= double(score.meters.size());
    return score;
}

ClusterReport make_cluster_report(std::vector<ClusterScore> clusters) {
    if (clusters.empty()) {
        throw DataError("report needs at least one cluster");
    }
    ClusterReport report;
    report.clusters = std::move(clusters);
    for (const ClusterScore& c : report.clusters) {
        report.overall_nrmse += c.mean_nrmse;
        report.overall_mae += c.mean_mae;
    }
    report.overall_nrmse /= double(report.clusters.size());
    report.overall_mae /= double(report.clusters.size());
    return report;
}

}  // namespace fedmeter
