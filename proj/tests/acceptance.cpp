// Acceptance suite: one pass/fail line per criterion, non-zero exit when any criterion fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "autodiff.hpp"
#include "dataset.hpp"
#include "error.hpp"
#include "evt.hpp"
#include "graph.hpp"
#include "metrics.hpp"
#include "model.hpp"
#include "pipeline.hpp"
#include "support.hpp"
#include "synth.hpp"
#include "training.hpp"

using namespace tailcast;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances and budgets.
constexpr double kXiTol = 0.03;
constexpr double kSigmaTol = 0.15;
constexpr double kFitSeconds = 5.0;
constexpr double kLimitTol = 1e-10;
constexpr double kKsMax = 0.01;
constexpr double kGradTol = 1e-4;
constexpr double kGradSeconds = 30.0;
constexpr double kAucTol = 1e-9;
constexpr double kApTol = 1e-12;
constexpr double kF1Tol = 1e-6;
constexpr double kScaleTol = 1e-12;
constexpr double kMinAuc = 0.75;
constexpr double kExperimentSeconds = 1800.0;

// End-to-end experiment settings; the model size and epoch cap keep six trainings inside the budget.
constexpr int kStations = 71;
constexpr int kYears = 15;
constexpr int kTrainYears = 13;
constexpr std::size_t kHidden = 16;
constexpr std::size_t kHeads = 2;
constexpr std::size_t kMaxEpochs = 36;
constexpr std::uint64_t kDataSeed = 7;
constexpr std::uint64_t kTrainSeeds[] = {1, 2, 3};

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Outcome gpd_recovery() {
  synth::Rng rng(2025);
  const auto y = synth::sample_gpd(20'000, 0.2, 5.0, rng);
  const auto t0 = std::chrono::steady_clock::now();
  const auto fit = evt::fit_gpd_mle(y);
  const double t = seconds_since(t0);
  const bool ok = std::abs(fit.xi - 0.2) <= kXiTol && std::abs(fit.sigma - 5.0) <= kSigmaTol && t < kFitSeconds;
  return {ok, fmt("xi %.4f sigma %.4f in %.2fs", fit.xi, fit.sigma, t)};
}

Outcome gpd_cdf_limit() {
  double worst = 0.0;
  for (double y : {0.01, 0.5, 1.0, 3.0, 10.0, 40.0})
    worst = std::max(worst, std::abs(evt::gpd_cdf(y, 1e-9, 3.0) - (1.0 - std::exp(-y / 3.0))));
  synth::Rng rng(99);
  const auto y = synth::sample_gpd(100'000, 0.2, 5.0, rng);
  const double ks = oracle::ks_statistic(y, [](double v) { return evt::gpd_cdf(v, 0.2, 5.0); });
  return {worst <= kLimitTol && ks < kKsMax, fmt("limit error %.2e, KS %.5f", worst, ks)};
}

Outcome gradient_integrity() {
  const auto t0 = std::chrono::steady_clock::now();
  model::ModelConfig c;
  c.mode = dataset::FeatureMode::Baseline;
  c.n_features = dataset::kBaseFeatures;
  c.c_in = 2;
  c.c_out = 3;
  c.n_layers = 2;
  c.hidden_dim = 4;
  c.n_heads = 4;
  c.seed = 17;
  const model::GatModel m(c);
  const std::size_t n = 6;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> z(0.0, 1.0);
  graph::Matrix a(n);
  for (std::size_t i = 0; i < n; ++i) {
    a(i, i) = 2.0;
    for (std::size_t j = i + 1; j < n; ++j) a(i, j) = a(j, i) = u(rng) < 0.3 ? 0.0 : 0.5 + u(rng);
  }
  const auto g = model::make_attention_graph(a);
  ad::Tensor x(ad::Shape{2, n, c.c_in * c.n_features}), y(ad::Shape{2, n, c.c_out});
  for (auto& v : x.values()) v = z(rng);
  for (auto& v : y.values()) v = u(rng) < 0.3;
  std::vector<double> w(n);
  for (auto& v : w) v = 1.0 + u(rng);
  auto f = [&](const std::vector<ad::Var>&) {
    return training::weighted_f1_loss(m.forward(ad::Var::constant(x), g), y, w);
  };
  const double err = ad::grad_check(f, m.parameters());
  const double t = seconds_since(t0);
  return {err < kGradTol && t < kGradSeconds, fmt("max relative error %.2e in %.2fs", err, t)};
}

Outcome metric_oracles() {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> len(2, 200), levels(1, 20);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double auc_err = 0.0, ap_err = 0.0;
  int done = 0;
  while (done < 1000) {
    const int n = len(rng), q = levels(rng);
    std::vector<double> y(n), s(n);
    for (int i = 0; i < n; ++i) {
      y[i] = u(rng) < 0.3;
      s[i] = std::floor(u(rng) * q) / q;
    }
    const double pos = std::accumulate(y.begin(), y.end(), 0.0);
    if (pos == 0.0 || pos == n) continue;
    ++done;
    auc_err = std::max(auc_err, std::abs(metrics::roc_auc(y, s).auc - oracle::mann_whitney_auc(y, s)));
    ap_err = std::max(ap_err, std::abs(metrics::pr_curve_ap(y, s).average_precision - oracle::exhaustive_ap(y, s)));
  }
  return {auc_err <= kAucTol && ap_err <= kApTol, fmt("max AUC gap %.2e, max AP gap %.2e", auc_err, ap_err)};
}

Outcome naive_predictor() {
  std::vector<double> y(1000, 0.0), s(1000, 0.0);
  for (std::size_t i = 0; i < 120; ++i) y[i * 8] = 1.0;
  const auto m = metrics::scalar_metrics(metrics::confusion(y, s));
  const bool ok = m.accuracy == 0.88 && m.balanced_accuracy == 0.5 && m.recall == 0.0 && m.precision == 0.0;
  return {ok, fmt("accuracy %.4f BA %.4f recall %.4f precision %.4f", m.accuracy, m.balanced_accuracy, m.recall,
                  m.precision)};
}

ingest::DailyRecord day(Date d, double t_max) {
  ingest::DailyRecord r;
  r.date = d;
  r.t_max = t_max;
  r.t_min = t_max - 10;
  r.t_avg = t_max - 5;
  r.t_dew = t_max - 12;
  r.rh = 50;
  r.wind = 2;
  r.precip = 0;
  r.pressure = 101;
  return r;
}

std::vector<int> labels_for(Date start, const std::vector<double>& t_max, double t90) {
  ingest::StationSeries s;
  s.meta = {"S", -120.0, 50.0, "S"};
  for (std::size_t i = 0; i < t_max.size(); ++i) s.records.push_back(day(start + static_cast<int>(i), t_max[i]));
  std::vector<int> out;
  for (const auto& l : dataset::label_pkl(s, t90)) out.push_back(l.label);
  return out;
}

Outcome labeling_golden() {
  int failures = 0;
  failures += labels_for(Date(2020, 7, 1), {20, 35, 35, 35, 20, 35, 35}, 30.0) != std::vector<int>{0, 1, 1, 1, 0, 0, 0};
  failures += labels_for(Date(2020, 9, 29), {35, 35, 35}, 30.0) != std::vector<int>{0, 0, 0};
  failures += labels_for(Date(2020, 4, 29), {35, 35, 35, 35, 35}, 30.0) != std::vector<int>{0, 0, 1, 1, 1};

  synth::SynthConfig c;
  c.n_stations = 3;
  c.n_years = 5;
  c.seed = 13;
  auto data = synth::generate(c);
  int planted = 0;
  for (auto& s : data.stations) {
    const double t90 = dataset::compute_t90(s, Date(2012, 12, 31));
    for (const Date start : {Date(2013, 6, 12), Date(2013, 8, 20)}) {
      for (auto& r : s.records) {
        const int k = r.date - start;
        if (k >= 0 && k < 5) r.t_max = t90 + 3.0 + k;
        if (k == -1 || k == 5) r.t_max = t90 - 2.0;
      }
    }
    for (const auto& l : dataset::label_pkl(s, t90))
      for (const Date start : {Date(2013, 6, 12), Date(2013, 8, 20)}) {
        const int k = l.date - start;
        if (k < -1 || k > 5) continue;
        ++planted;
        failures += l.label != (k >= 0 && k < 5 ? 1 : 0);
      }
  }
  return {failures == 0 && planted == 42, fmt("%d mismatches over 3 hand sequences and %d planted days", failures, planted)};
}

Outcome weight_formula() {
  evt::GpdDescriptors a, b;
  a.xi = 0.0;
  a.sigma = 4.0;
  b.xi = 0.2;
  b.sigma = 4.0;
  const auto w = graph::station_weights({a, b});
  synth::SynthConfig c;
  c.n_stations = 12;
  c.n_years = 4;
  const auto data = synth::generate(c);
  std::vector<std::vector<double>> series;
  for (const auto& s : data.stations) {
    auto& row = series.emplace_back();
    for (const auto& r : s.records) row.push_back(*r.t_max);
  }
  const auto rho = graph::pearson_adjacency(series);
  const auto unit = graph::weighted_adjacency(rho, std::vector<double>(series.size(), 1.0));
  bool exact = true;
  for (std::size_t k = 0; k < rho.data.size(); ++k) exact &= unit.data[k] == std::max(rho.data[k], 0.0);
  return {w[0] == 2.0 && w[1] == 2.2 && exact, fmt("w = %.17g, %.17g; unit-weight adjacency %s", w[0], w[1],
                                                   exact ? "bit-exact" : "differs")};
}

double median3(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

Outcome directional_experiment(const fs::path& root) {
  const auto t0 = std::chrono::steady_clock::now();
  pipeline::RunConfig base;
  base.out_dir = root / "synth71";
  base.seed = kDataSeed;
  base.synth.n_stations = kStations;
  base.synth.n_years = kYears;
  pipeline::run_synth(base);
  base.data_dir = base.out_dir;
  base.train_years = kTrainYears;
  base.c_in = 10;
  base.c_out = 3;
  base.batch_size = 64;
  base.learning_rate = 1e-3;
  base.max_epochs = kMaxEpochs;
  base.hidden_dim = kHidden;
  base.n_heads = kHeads;

  std::vector<double> di_recall, di_ba, di_auc, bl_recall, bl_ba;
  for (const auto seed : kTrainSeeds) {
    for (const auto mode : {dataset::FeatureMode::Di, dataset::FeatureMode::Baseline}) {
      auto c = base;
      c.seed = seed;
      c.mode = mode;
      const auto o = pipeline::train_model(c);
      const auto r = pipeline::evaluate_model(o.trained, c);
      std::printf("  seed %llu %-8s epochs %zu best %zu  BA %.4f recall %.4f precision %.4f AUC %.4f  (%.0fs)\n",
                  static_cast<unsigned long long>(seed), dataset::to_string(mode), o.report.epochs.size(),
                  o.report.best_epoch, r.scalars.balanced_accuracy, r.scalars.recall, r.scalars.precision,
                  r.auc_roc.value_or(NAN), seconds_since(t0));
      std::fflush(stdout);
      if (mode == dataset::FeatureMode::Di) {
        di_recall.push_back(r.scalars.recall);
        di_ba.push_back(r.scalars.balanced_accuracy);
        di_auc.push_back(r.auc_roc.value_or(0.0));
      } else {
        bl_recall.push_back(r.scalars.recall);
        bl_ba.push_back(r.scalars.balanced_accuracy);
      }
    }
  }
  const double t = seconds_since(t0);
  const double dr = median3(di_recall), db = median3(di_ba), da = median3(di_auc);
  const double br = median3(bl_recall), bb = median3(bl_ba);
  const bool ok = dr > br && db > bb && da > kMinAuc && t < kExperimentSeconds;
  return {ok, fmt("median recall %.4f vs %.4f, BA %.4f vs %.4f, AUC %.4f, %.0fs", dr, br, db, bb, da, t)};
}

Outcome loss_consistency() {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(0.0, 1.0), wd(1.0, 2.5);
  double f1_gap = 0.0, scale_gap = 0.0;
  for (int k = 0; k < 100; ++k) {
    const std::size_t n = 8, h = 3;
    std::vector<double> y(n * h), p(n * h), w(n), w2(n);
    for (auto& v : y) v = u(rng) < 0.3;
    for (auto& v : p) v = u(rng) < 0.35;
    const double f1 = metrics::scalar_metrics(metrics::confusion(y, p)).f1;
    f1_gap = std::max(f1_gap, std::abs(1.0 - training::weighted_f1_loss(y, p, std::vector<double>(n, 1.0)) - f1));
    for (auto& v : p) v = u(rng);
    for (std::size_t i = 0; i < n; ++i) w2[i] = 2.0 * (w[i] = wd(rng));
    scale_gap = std::max(scale_gap,
                         std::abs(training::weighted_f1_loss(y, p, w) - training::weighted_f1_loss(y, p, w2)));
  }
  return {f1_gap <= kF1Tol && scale_gap <= kScaleTol, fmt("F1 gap %.2e, scaling gap %.2e", f1_gap, scale_gap)};
}

pipeline::RunConfig small_run(const fs::path& root) {
  pipeline::RunConfig c;
  c.out_dir = root / "small";
  c.seed = 5;
  c.synth.n_stations = 8;
  c.synth.n_years = 6;
  if (!fs::exists(c.out_dir / "stations.csv")) pipeline::run_synth(c);
  c.data_dir = c.out_dir;
  c.train_years = 4;
  c.hidden_dim = 8;
  c.n_heads = 2;
  c.max_epochs = 4;
  return c;
}

std::string slurp(const fs::path& p) {
  std::FILE* f = std::fopen(p.c_str(), "rb");
  std::string s;
  if (!f) return s;
  char buf[65536];
  for (std::size_t n; (n = std::fread(buf, 1, sizeof buf, f)) > 0;) s.append(buf, n);
  std::fclose(f);
  return s;
}

Outcome determinism(const fs::path& root) {
  auto c = small_run(root);
  c.out_dir = root / "det_a";
  pipeline::run_train(c);
  c.out_dir = root / "det_b";
  pipeline::run_train(c);
  const bool ckpt = slurp(root / "det_a" / "model.ckpt") == slurp(root / "det_b" / "model.ckpt");
  const bool epochs = slurp(root / "det_a" / "epochs.csv") == slurp(root / "det_b" / "epochs.csv");
  return {ckpt && epochs && !slurp(root / "det_a" / "model.ckpt").empty(),
          fmt("checkpoints %s, epoch logs %s", ckpt ? "identical" : "differ", epochs ? "identical" : "differ")};
}

Outcome checkpoint_round_trip(const fs::path& root) {
  const auto c = small_run(root);
  const auto o = pipeline::train_model(c);
  const auto before = pipeline::evaluate_model(o.trained, c);
  const auto path = root / "round_trip.ckpt";
  model::save_checkpoint(o.trained, path);
  const auto after = pipeline::evaluate_model(model::load_checkpoint(path), c);
  const bool same = before == after && metrics::report_json(before) == metrics::report_json(after);
  return {same, fmt("reports %s (BA %.6f)", same ? "identical" : "differ", after.scalars.balanced_accuracy)};
}

}  // namespace

int main() {
  const fs::path root = fs::temp_directory_path() / "tailcast_acceptance";
  fs::remove_all(root);
  fs::create_directories(root);

  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"GPD parameter recovery", gpd_recovery},
      {"GPD distribution function limit and KS", gpd_cdf_limit},
      {"gradient integrity", gradient_integrity},
      {"metric oracle equivalence", metric_oracles},
      {"naive predictor", naive_predictor},
      {"labeling golden cases", labeling_golden},
      {"station weight formula", weight_formula},
      {"end-to-end directional experiment", [&] { return directional_experiment(root); }},
      {"loss consistency", loss_consistency},
      {"training determinism", [&] { return determinism(root); }},
      {"checkpoint round trip", [&] { return checkpoint_round_trip(root); }},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("criterion %2zu %-40s %s  %s\n", i + 1, criteria[i].first, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
