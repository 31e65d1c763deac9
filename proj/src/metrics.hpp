#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace tailcast::metrics {

inline constexpr double kDefaultThreshold = 0.5;

struct ConfusionCounts {
  std::uint64_t tp = 0, tn = 0, fp = 0, fn = 0;
  std::uint64_t total() const noexcept { return tp + tn + fp + fn; }
  bool operator==(const ConfusionCounts&) const = default;
};

// Positive prediction iff score >= threshold. Labels must be 0 or 1.
ConfusionCounts confusion(std::span<const double> y, std::span<const double> scores,
                          double threshold = kDefaultThreshold);

// precision = 0 when tp+fp = 0, recall = 0 when tp+fn = 0, tnr = 0 when tn+fp = 0,
// f1 = 0 when precision+recall = 0.
struct ScalarMetrics {
  double accuracy = 0, balanced_accuracy = 0, precision = 0, recall = 0, tnr = 0, f1 = 0;
  bool operator==(const ScalarMetrics&) const = default;
};
ScalarMetrics scalar_metrics(const ConfusionCounts& c);

struct CurvePoint {
  double threshold, fpr, tpr, precision, recall;
};

struct RocResult {
  std::vector<CurvePoint> curve;  // descending thresholds, first point at +inf
  double auc = 0;
};
// Equal scores form one step; area by trapezoids. Throws SingleClassInput.
RocResult roc_auc(std::span<const double> y, std::span<const double> scores);

struct PrResult {
  std::vector<CurvePoint> curve;
  double average_precision = 0;
};
// AP = sum_k (R_k - R_{k-1}) P_k over descending distinct thresholds. Throws NoPositives.
PrResult pr_curve_ap(std::span<const double> y, std::span<const double> scores);

inline constexpr const char* kCurveHeader = "threshold,fpr,tpr,precision,recall";
std::string curve_csv(const std::vector<CurvePoint>& curve);

struct StationMetrics {
  std::string station_id;
  ConfusionCounts counts;
  ScalarMetrics scalars;
};

struct MetricsReport {
  ConfusionCounts counts;
  ScalarMetrics scalars;
  std::optional<double> auc_roc;            // absent for single-class input
  std::optional<double> average_precision;  // absent without positives
  double threshold = kDefaultThreshold;
  std::vector<StationMetrics> per_station;
  bool operator==(const MetricsReport&) const;
};

// Micro-averaged report over all scores.
MetricsReport evaluate(std::span<const double> y, std::span<const double> scores,
                       double threshold = kDefaultThreshold);

// Adds a per-station breakdown. Samples are laid out [sample][horizon][station].
void add_station_breakdown(MetricsReport& report, std::span<const double> y, std::span<const double> scores,
                           const std::vector<std::string>& station_ids);

std::string report_json(const MetricsReport& report);
// Flat name -> value map of the scalar metrics in a report JSON document.
std::vector<std::pair<std::string, double>> report_metrics(const std::string& json_text);

struct ComparisonRow {
  std::string metric;
  double a, b, delta;  // delta = b - a
};
// Throws MissingMetric when a metric is present in only one report.
std::vector<ComparisonRow> compare_reports(const std::string& json_a, const std::string& json_b);
inline constexpr const char* kCompareHeader = "metric,a,b,delta";
std::string comparison_csv(const std::vector<ComparisonRow>& rows);

inline constexpr const char* kSweepHeader = "threshold,accuracy,balanced_accuracy,precision,recall,tnr,f1";
// Thresholds 0.05, 0.10, ..., 0.95.
std::string threshold_sweep_csv(std::span<const double> y, std::span<const double> scores);

}  // namespace tailcast::metrics
