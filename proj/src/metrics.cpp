#include "metrics.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include "csv.hpp"
#include "error.hpp"

namespace tailcast::metrics {

namespace {

void check_inputs(std::span<const double> y, std::span<const double> s) {
  if (y.size() != s.size())
    throw Error(ErrorKind::LengthMismatch,
                std::to_string(y.size()) + " labels vs " + std::to_string(s.size()) + " scores");
  if (y.empty()) throw Error(ErrorKind::LengthMismatch, "empty input");
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] != 0.0 && y[i] != 1.0) throw Error(ErrorKind::InvalidParams, "labels must be 0 or 1");
    if (!std::isfinite(s[i])) throw Error(ErrorKind::InvalidParams, "non-finite score at index " + std::to_string(i));
  }
}

double ratio(double num, double den) { return den > 0.0 ? num / den : 0.0; }

// Cumulative counts at each distinct threshold, descending, starting from (+inf, 0, 0).
std::vector<CurvePoint> sweep_curve(std::span<const double> y, std::span<const double> s) {
  std::vector<std::size_t> order(s.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return s[a] > s[b]; });
  const double pos = std::accumulate(y.begin(), y.end(), 0.0);
  const double neg = static_cast<double>(y.size()) - pos;
  std::vector<CurvePoint> curve{{std::numeric_limits<double>::infinity(), 0.0, 0.0, 0.0, 0.0}};
  double tp = 0.0, fp = 0.0;
  for (std::size_t k = 0; k < order.size();) {
    const double thr = s[order[k]];
    while (k < order.size() && s[order[k]] == thr) {
      if (y[order[k]] == 1.0) tp += 1.0;
      else fp += 1.0;
      ++k;
    }
    const double recall = ratio(tp, pos);
    curve.push_back({thr, ratio(fp, neg), recall, ratio(tp, tp + fp), recall});
  }
  return curve;
}

}  // namespace

ConfusionCounts confusion(std::span<const double> y, std::span<const double> scores, double threshold) {
  check_inputs(y, scores);
  ConfusionCounts c;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const bool pred = scores[i] >= threshold;
    const bool truth = y[i] == 1.0;
    if (pred && truth) ++c.tp;
    else if (pred) ++c.fp;
    else if (truth) ++c.fn;
    else ++c.tn;
  }
  return c;
}

ScalarMetrics scalar_metrics(const ConfusionCounts& c) {
  const double tp = static_cast<double>(c.tp), tn = static_cast<double>(c.tn);
  const double fp = static_cast<double>(c.fp), fn = static_cast<double>(c.fn);
  ScalarMetrics m;
  m.accuracy = ratio(tp + tn, tp + tn + fp + fn);
  m.precision = ratio(tp, tp + fp);
  m.recall = ratio(tp, tp + fn);
  m.tnr = ratio(tn, tn + fp);
  m.balanced_accuracy = (m.recall + m.tnr) / 2.0;
  m.f1 = ratio(2.0 * m.precision * m.recall, m.precision + m.recall);
  return m;
}

RocResult roc_auc(std::span<const double> y, std::span<const double> scores) {
  check_inputs(y, scores);
  const double pos = std::accumulate(y.begin(), y.end(), 0.0);
  if (pos == 0.0 || pos == static_cast<double>(y.size()))
    throw Error(ErrorKind::SingleClassInput, "ROC needs both classes");
  RocResult r;
  r.curve = sweep_curve(y, scores);
  for (std::size_t k = 1; k < r.curve.size(); ++k)
    r.auc += (r.curve[k].fpr - r.curve[k - 1].fpr) * (r.curve[k].tpr + r.curve[k - 1].tpr) / 2.0;
  return r;
}

PrResult pr_curve_ap(std::span<const double> y, std::span<const double> scores) {
  check_inputs(y, scores);
  if (std::accumulate(y.begin(), y.end(), 0.0) == 0.0) throw Error(ErrorKind::NoPositives, "AP needs a positive label");
  PrResult r;
  r.curve = sweep_curve(y, scores);
  for (std::size_t k = 1; k < r.curve.size(); ++k)
    r.average_precision += (r.curve[k].recall - r.curve[k - 1].recall) * r.curve[k].precision;
  return r;
}

std::string curve_csv(const std::vector<CurvePoint>& curve) {
  std::ostringstream os;
  os << kCurveHeader << '\n';
  for (const auto& p : curve)
    os << csv::format_double(p.threshold) << ',' << csv::format_double(p.fpr) << ',' << csv::format_double(p.tpr)
       << ',' << csv::format_double(p.precision) << ',' << csv::format_double(p.recall) << '\n';
  return os.str();
}

bool MetricsReport::operator==(const MetricsReport& o) const {
  if (per_station.size() != o.per_station.size()) return false;
  for (std::size_t i = 0; i < per_station.size(); ++i)
    if (per_station[i].station_id != o.per_station[i].station_id || per_station[i].counts != o.per_station[i].counts ||
        per_station[i].scalars != o.per_station[i].scalars)
      return false;
  return counts == o.counts && scalars == o.scalars && auc_roc == o.auc_roc &&
         average_precision == o.average_precision && threshold == o.threshold;
}

MetricsReport evaluate(std::span<const double> y, std::span<const double> scores, double threshold) {
  MetricsReport r;
  r.threshold = threshold;
  r.counts = confusion(y, scores, threshold);
  r.scalars = scalar_metrics(r.counts);
  if (r.counts.tp + r.counts.fn > 0) {
    r.average_precision = pr_curve_ap(y, scores).average_precision;
    if (r.counts.tn + r.counts.fp > 0) r.auc_roc = roc_auc(y, scores).auc;
  }
  return r;
}

void add_station_breakdown(MetricsReport& report, std::span<const double> y, std::span<const double> scores,
                           const std::vector<std::string>& ids) {
  check_inputs(y, scores);
  const std::size_t n = ids.size();
  if (n == 0 || y.size() % n != 0) throw Error(ErrorKind::ShapeMismatch, "scores are not a multiple of station count");
  report.per_station.clear();
  for (std::size_t s = 0; s < n; ++s) {
    std::vector<double> ys, ps;
    for (std::size_t k = s; k < y.size(); k += n) {
      ys.push_back(y[k]);
      ps.push_back(scores[k]);
    }
    StationMetrics m{ids[s], confusion(ys, ps, report.threshold), {}};
    m.scalars = scalar_metrics(m.counts);
    report.per_station.push_back(std::move(m));
  }
}

namespace {

using nlohmann::ordered_json;

ordered_json scalars_json(const ConfusionCounts& c, const ScalarMetrics& m) {
  ordered_json j;
  j["tp"] = c.tp;
  j["tn"] = c.tn;
  j["fp"] = c.fp;
  j["fn"] = c.fn;
  j["accuracy"] = m.accuracy;
  j["balanced_accuracy"] = m.balanced_accuracy;
  j["precision"] = m.precision;
  j["recall"] = m.recall;
  j["tnr"] = m.tnr;
  j["f1"] = m.f1;
  return j;
}

}  // namespace

std::string report_json(const MetricsReport& r) {
  ordered_json j = scalars_json(r.counts, r.scalars);
  j["auc_roc"] = r.auc_roc ? ordered_json(*r.auc_roc) : ordered_json(nullptr);
  j["average_precision"] = r.average_precision ? ordered_json(*r.average_precision) : ordered_json(nullptr);
  j["threshold"] = r.threshold;
  if (!r.per_station.empty()) {
    ordered_json arr = ordered_json::array();
    for (const auto& s : r.per_station) {
      ordered_json e;
      e["station_id"] = s.station_id;
      e.update(scalars_json(s.counts, s.scalars));
      arr.push_back(std::move(e));
    }
    j["per_station"] = std::move(arr);
  }
  return j.dump(2) + "\n";
}

namespace {

const char* const kReportKeys[] = {"accuracy", "balanced_accuracy", "precision", "recall", "tnr",
                                   "f1",       "auc_roc",           "average_precision", "tp", "tn",
                                   "fp",       "fn"};

std::map<std::string, double> parse_metrics(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::MissingMetric, std::string("report is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw Error(ErrorKind::MissingMetric, "report is not a JSON object");
  std::map<std::string, double> out;
  for (const char* key : kReportKeys)
    if (j.contains(key) && j[key].is_number()) out[key] = j[key].get<double>();
  return out;
}

}  // namespace

std::vector<std::pair<std::string, double>> report_metrics(const std::string& text) {
  const auto m = parse_metrics(text);
  std::vector<std::pair<std::string, double>> out;
  for (const char* key : kReportKeys)
    if (auto it = m.find(key); it != m.end()) out.emplace_back(key, it->second);
  return out;
}

std::vector<ComparisonRow> compare_reports(const std::string& a_text, const std::string& b_text) {
  const auto a = parse_metrics(a_text);
  const auto b = parse_metrics(b_text);
  std::vector<ComparisonRow> rows;
  for (const char* key : kReportKeys) {
    const auto ia = a.find(key), ib = b.find(key);
    if (ia == a.end() && ib == b.end()) continue;
    if (ia == a.end() || ib == b.end())
      throw Error(ErrorKind::MissingMetric, std::string(key) + " is missing from report " + (ia == a.end() ? "A" : "B"));
    rows.push_back({key, ia->second, ib->second, ib->second - ia->second});
  }
  if (rows.empty()) throw Error(ErrorKind::MissingMetric, "reports contain no metrics");
  return rows;
}

std::string comparison_csv(const std::vector<ComparisonRow>& rows) {
  std::ostringstream os;
  os << kCompareHeader << '\n';
  for (const auto& r : rows)
    os << r.metric << ',' << csv::format_double(r.a) << ',' << csv::format_double(r.b) << ','
       << csv::format_double(r.delta) << '\n';
  return os.str();
}

std::string threshold_sweep_csv(std::span<const double> y, std::span<const double> scores) {
  std::ostringstream os;
  os << kSweepHeader << '\n';
  for (int k = 1; k <= 19; ++k) {
    const double t = k / 20.0;
    const auto m = scalar_metrics(confusion(y, scores, t));
    os << csv::format_double(t) << ',' << csv::format_double(m.accuracy) << ','
       << csv::format_double(m.balanced_accuracy) << ',' << csv::format_double(m.precision) << ','
       << csv::format_double(m.recall) << ',' << csv::format_double(m.tnr) << ',' << csv::format_double(m.f1) << '\n';
  }
  return os.str();
}

}  // namespace tailcast::metrics
