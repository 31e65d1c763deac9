#include "dataset.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include "error.hpp"
#include "stats.hpp"

namespace tailcast::dataset {

const char* to_string(FeatureMode mode) noexcept { return mode == FeatureMode::Di ? "di" : "baseline"; }

std::optional<FeatureMode> parse_feature_mode(std::string_view s) {
  if (s == "di") return FeatureMode::Di;
  if (s == "baseline") return FeatureMode::Baseline;
  return std::nullopt;
}

std::size_t feature_count(FeatureMode mode) noexcept { return mode == FeatureMode::Di ? kDiFeatures : kBaseFeatures; }

std::vector<FeatureInfo> feature_layout(FeatureMode mode) {
  std::vector<FeatureInfo> out{
      {"beta", "binary"},  {"t_max", "degC"},   {"t_min", "degC"}, {"t_avg", "degC"},  {"t_dew", "degC"},
      {"rh", "percent"},   {"wind", "m/s"},     {"precip", "mm"},  {"pressure", "kPa"}, {"lon", "deg"},
      {"lat", "deg"},      {"doy_sin", "unit"}, {"doy_cos", "unit"},
  };
  if (mode == FeatureMode::Di) {
    out.insert(out.end(), {{"xi", "unitless"}, {"sigma", "degC"}, {"mu", "degC"}, {"variance", "degC^2"}, {"q95", "degC"}});
  }
  return out;
}

double compute_t90(std::span<const double> summer_t_max, int n_summers) {
  if (n_summers < 3 || summer_t_max.empty())
    throw Error(ErrorKind::TooFewObservations, "T90 needs >= 3 summers of training data, got " + std::to_string(n_summers));
  return stats::quantile(std::vector<double>(summer_t_max.begin(), summer_t_max.end()), 0.90);
}

double compute_t90(const ingest::StationSeries& series, Date train_end) {
  std::vector<double> values;
  std::set<int> years;
  for (const auto& r : series.records) {
    if (r.date > train_end || !r.date.is_summer() || !r.t_max) continue;
    values.push_back(*r.t_max);
    years.insert(r.date.year());
  }
  return compute_t90(values, static_cast<int>(years.size()));
}

std::vector<LabeledDay> label_pkl(const ingest::StationSeries& series, double t90, int min_run) {
  const auto& recs = series.records;
  std::vector<LabeledDay> out(recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) out[i] = {recs[i].date, series.meta.station_id, 0};
  auto hot = [&](std::size_t i) { return recs[i].date.is_summer() && recs[i].t_max && *recs[i].t_max > t90; };
  std::size_t i = 0;
  while (i < recs.size()) {
    if (!hot(i)) {
      ++i;
      continue;
    }
    std::size_t end = i + 1;
    while (end < recs.size() && hot(end) && recs[end].date - recs[end - 1].date == 1) ++end;
    if (static_cast<int>(end - i) >= min_run)
      for (std::size_t k = i; k < end; ++k) out[k].label = 1;
    i = end;
  }
  return out;
}

std::vector<std::vector<double>> build_features(const ingest::StationSeries& series,
                                                const std::vector<LabeledDay>& labels,
                                                const evt::GpdDescriptors* d, FeatureMode mode) {
  if (labels.size() != series.records.size())
    throw Error(ErrorKind::LengthMismatch, "labels and series are not aligned");
  if (mode == FeatureMode::Di && !d)
    throw Error(ErrorKind::MissingDescriptors, "di features need GPD descriptors for " + series.meta.station_id);
  std::vector<std::vector<double>> rows;
  rows.reserve(series.records.size());
  for (std::size_t i = 0; i < series.records.size(); ++i) {
    const auto& r = series.records[i];
    if (labels[i].date != r.date) throw Error(ErrorKind::LengthMismatch, "label date mismatch at " + r.date.iso());
    if (!r.complete()) throw Error(ErrorKind::MalformedRow, "incomplete record at " + r.date.iso());
    const double phase = 2.0 * std::numbers::pi * r.date.day_of_year() / 365.25;
    std::vector<double> row{static_cast<double>(labels[i].label),
                            *r.t_max,
                            *r.t_min,
                            *r.t_avg,
                            *r.t_dew,
                            *r.rh,
                            *r.wind,
                            *r.precip,
                            *r.pressure,
                            series.meta.lon,
                            series.meta.lat,
                            std::sin(phase),
                            std::cos(phase)};
    if (mode == FeatureMode::Di) row.insert(row.end(), {d->xi, d->sigma, d->mu, d->variance, d->q95});
    rows.push_back(std::move(row));
  }
  return rows;
}

NormStats fit_norm_stats(const std::vector<std::span<const double>>& rows, std::size_t dim) {
  NormStats s;
  s.mean.assign(dim, 0.0);
  s.sd.assign(dim, 1.0);
  s.passthrough.assign(dim, false);
  if (rows.empty()) throw Error(ErrorKind::EmptyDataset, "no training rows for normalisation");
  const double n = static_cast<double>(rows.size());
  for (std::size_t k = 0; k < dim; ++k) {
    double m = 0.0;
    for (const auto& r : rows) m += r[k];
    m /= n;
    double ss = 0.0;
    for (const auto& r : rows) ss += (r[k] - m) * (r[k] - m);
    // Population sd so the normalised training set has unit variance exactly.
    const double sd = std::sqrt(ss / n);
    s.mean[k] = m;
    s.sd[k] = sd;
    if (k == kBetaChannel) {
      s.passthrough[k] = true;
    } else if (sd < kMinSd) {
      s.passthrough[k] = true;
      s.warnings.push_back("feature " + std::to_string(k) + " is constant over training data; left unscaled");
    }
  }
  return s;
}

void normalize_in_place(std::span<double> row, const NormStats& s) {
  for (std::size_t k = 0; k < row.size(); ++k)
    if (!s.passthrough[k]) row[k] = (row[k] - s.mean[k]) / s.sd[k];
}

void WindowSet::fill(std::size_t i, std::span<double> x, std::span<double> y) const {
  const Panel& p = *panel;
  const std::size_t anchor = anchors[i];
  const std::size_t block = p.n_stations * p.n_features;
  const std::size_t start = anchor + 1 - c_in;
  std::copy_n(p.features.begin() + static_cast<std::ptrdiff_t>(start * block), c_in * block, x.begin());
  if (y.empty()) return;
  for (std::size_t h = 0; h < c_out; ++h)
    for (std::size_t s = 0; s < p.n_stations; ++s) y[h * p.n_stations + s] = p.label(anchor + 1 + h, s);
}

WindowSample WindowSet::sample(std::size_t i) const {
  WindowSample w;
  w.x.resize(c_in * panel->n_stations * panel->n_features);
  w.y.resize(c_out * panel->n_stations);
  fill(i, w.x, w.y);
  w.anchor_date = panel->date(anchors[i]);
  return w;
}

WindowSplit make_windows(const Panel& panel, std::size_t c_in, std::size_t c_out, const SplitSpec& split) {
  if (c_in < 1 || c_out < 1) throw Error(ErrorKind::InvalidConfig, "c_in and c_out must be >= 1");
  if (!(split.train_end < split.val_start)) throw Error(ErrorKind::InvalidConfig, "train_end must precede val_start");
  WindowSplit out;
  out.train = WindowSet{&panel, c_in, c_out, {}};
  out.val = WindowSet{&panel, c_in, c_out, {}};
  const std::size_t span = c_in + c_out;
  if (panel.n_days < span) throw Error(ErrorKind::EmptyWindowSet, "series shorter than c_in + c_out");
  // invalid_before[d] = number of invalid days in [0, d)
  std::vector<std::size_t> invalid_before(panel.n_days + 1, 0);
  for (std::size_t d = 0; d < panel.n_days; ++d) invalid_before[d + 1] = invalid_before[d] + (panel.valid[d] ? 0 : 1);
  for (std::size_t anchor = c_in - 1; anchor + c_out < panel.n_days; ++anchor) {
    const std::size_t first = anchor + 1 - c_in;
    const std::size_t last = anchor + c_out;
    if (invalid_before[last + 1] != invalid_before[first]) continue;
    if (panel.date(last) <= split.train_end) {
      out.train.anchors.push_back(anchor);
    } else if (panel.date(first) >= split.val_start) {
      out.val.anchors.push_back(anchor);
    }
  }
  if (out.train.empty() && out.val.empty()) throw Error(ErrorKind::EmptyWindowSet, "no complete windows");
  return out;
}

Panel assemble_panel(const std::vector<PreparedStation>& stations, FeatureMode mode) {
  if (stations.empty()) throw Error(ErrorKind::EmptyInput, "no stations");
  Panel p;
  p.n_stations = stations.size();
  p.n_features = feature_count(mode);
  Date first{std::numeric_limits<int>::max()}, last{std::numeric_limits<int>::min()};
  for (const auto& st : stations) {
    if (st.series.records.empty()) throw Error(ErrorKind::EmptyInput, "station " + st.series.meta.station_id + " has no data");
    first = std::min(first, st.series.records.front().date);
    last = std::max(last, st.series.records.back().date);
    p.station_ids.push_back(st.series.meta.station_id);
  }
  p.first = first;
  p.n_days = static_cast<std::size_t>(last - first) + 1;
  p.features.assign(p.n_days * p.n_stations * p.n_features, 0.0);
  p.labels.assign(p.n_days * p.n_stations, 0);
  std::vector<std::size_t> present(p.n_days, 0);
  for (std::size_t s = 0; s < stations.size(); ++s) {
    const auto& st = stations[s];
    const auto rows = build_features(st.series, st.labels, st.descriptors ? &*st.descriptors : nullptr, mode);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto day = static_cast<std::size_t>(st.series.records[i].date - first);
      std::copy(rows[i].begin(), rows[i].end(), p.row(day, s).begin());
      p.labels[day * p.n_stations + s] = static_cast<std::uint8_t>(st.labels[i].label);
      ++present[day];
    }
  }
  p.valid.resize(p.n_days);
  for (std::size_t d = 0; d < p.n_days; ++d) p.valid[d] = present[d] == p.n_stations ? 1 : 0;
  return p;
}

double summer_positive_fraction(const std::vector<PreparedStation>& stations) {
  std::size_t pos = 0, total = 0;
  for (const auto& st : stations)
    for (const auto& l : st.labels)
      if (l.date.is_summer()) {
        ++total;
        pos += static_cast<std::size_t>(l.label);
      }
  return total ? static_cast<double>(pos) / static_cast<double>(total) : 0.0;
}

std::string labels_csv(const std::vector<PreparedStation>& stations) {
  std::ostringstream os;
  os << kLabelHeader << '\n';
  for (const auto& st : stations)
    for (const auto& l : st.labels) os << l.station_id << ',' << l.date.iso() << ',' << l.label << '\n';
  return os.str();
}

}  // namespace tailcast::dataset
