#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "date.hpp"
#include "evt.hpp"
#include "ingest.hpp"

namespace tailcast::dataset {

enum class FeatureMode { Baseline, Di };

const char* to_string(FeatureMode mode) noexcept;
std::optional<FeatureMode> parse_feature_mode(std::string_view s);

inline constexpr std::size_t kBaseFeatures = 13;
inline constexpr std::size_t kDiFeatures = 18;
inline constexpr std::size_t kBetaChannel = 0;

std::size_t feature_count(FeatureMode mode) noexcept;

struct FeatureInfo {
  const char* name;
  const char* unit;
};
// Names and units in vector order for the given mode.
std::vector<FeatureInfo> feature_layout(FeatureMode mode);

struct LabeledDay {
  Date date;
  std::string station_id;
  int label = 0;
};

struct SplitSpec {
  Date train_end;
  Date val_start;
};

// Type-7 90th percentile of summer T_max up to and including train_end.
// Needs summer data from at least three distinct years.
double compute_t90(const ingest::StationSeries& series, Date train_end);
double compute_t90(std::span<const double> summer_t_max, int n_summers);

// A day is 1 iff it lies in a maximal run of >= min_run consecutive summer days with
// T_max strictly above t90. Calendar gaps and season boundaries break runs.
std::vector<LabeledDay> label_pkl(const ingest::StationSeries& series, double t90, int min_run = 3);

// Per-record feature rows in feature_layout order. Records must be complete.
std::vector<std::vector<double>> build_features(const ingest::StationSeries& series,
                                                const std::vector<LabeledDay>& labels,
                                                const evt::GpdDescriptors* descriptors, FeatureMode mode);

struct NormStats {
  std::vector<double> mean;
  std::vector<double> sd;
  std::vector<bool> passthrough;  // raw channel or near-zero training variance
  std::vector<std::string> warnings;
};

inline constexpr double kMinSd = 1e-12;

NormStats fit_norm_stats(const std::vector<std::span<const double>>& training_rows, std::size_t dim);
void normalize_in_place(std::span<double> row, const NormStats& stats);

// Aligned multi-station view on a contiguous calendar.
struct Panel {
  Date first;
  std::size_t n_days = 0;
  std::size_t n_stations = 0;
  std::size_t n_features = 0;
  std::vector<std::string> station_ids;
  std::vector<double> features;  // [day][station][feature]
  std::vector<std::uint8_t> labels;  // [day][station]
  std::vector<std::uint8_t> valid;   // [day]: every station has a complete record

  Date date(std::size_t day) const { return first + static_cast<int>(day); }
  std::span<double> row(std::size_t day, std::size_t station) {
    return {features.data() + (day * n_stations + station) * n_features, n_features};
  }
  std::span<const double> row(std::size_t day, std::size_t station) const {
    return {features.data() + (day * n_stations + station) * n_features, n_features};
  }
  std::uint8_t label(std::size_t day, std::size_t station) const { return labels[day * n_stations + station]; }
};

struct WindowSample {
  std::vector<double> x;  // c_in x n_stations x n_features
  std::vector<double> y;  // c_out x n_stations
  Date anchor_date;
};

// Windows are stored as anchor indices into a shared panel and materialised on demand.
struct WindowSet {
  const Panel* panel = nullptr;
  std::size_t c_in = 0;
  std::size_t c_out = 0;
  std::vector<std::size_t> anchors;

  std::size_t size() const noexcept { return anchors.size(); }
  bool empty() const noexcept { return anchors.empty(); }
  WindowSample sample(std::size_t i) const;
  // Writes x (and y when non-null) of window i into caller-provided buffers.
  void fill(std::size_t i, std::span<double> x, std::span<double> y) const;
};

struct WindowSplit {
  WindowSet train;
  WindowSet val;
};

// Stride-1 windows over valid days. Training windows have every target day <= train_end;
// validation windows lie entirely (inputs and targets) on or after val_start.
WindowSplit make_windows(const Panel& panel, std::size_t c_in, std::size_t c_out, const SplitSpec& split);

struct PreparedStation {
  ingest::StationSeries series;  // complete records only
  std::vector<LabeledDay> labels;
  std::optional<evt::GpdDescriptors> descriptors;
  double t90 = 0.0;
};

// Assembles the panel from per-station features (un-normalised).
Panel assemble_panel(const std::vector<PreparedStation>& stations, FeatureMode mode);

// Fraction of positive labels among summer station-days.
double summer_positive_fraction(const std::vector<PreparedStation>& stations);

inline constexpr const char* kLabelHeader = "station_id,date,label";
std::string labels_csv(const std::vector<PreparedStation>& stations);

}  // namespace tailcast::dataset
