// Independent reference implementations and fixtures shared by the test suites.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace oracle {

// Hyndman-Fan type 7 quantile by explicit rank arithmetic.
inline double type7_quantile(std::vector<double> x, double p) {
  std::sort(x.begin(), x.end());
  const double h = (static_cast<double>(x.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, x.size() - 1);
  return x[lo] + (h - static_cast<double>(lo)) * (x[hi] - x[lo]);
}

// P(score_pos > score_neg) + 0.5 P(tie) by enumerating every pair.
inline double mann_whitney_auc(std::span<const double> y, std::span<const double> s) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] != 1.0) continue;
    for (std::size_t j = 0; j < y.size(); ++j) {
      if (y[j] != 0.0) continue;
      pairs += 1.0;
      if (s[i] > s[j]) wins += 1.0;
      else if (s[i] == s[j]) wins += 0.5;
    }
  }
  return wins / pairs;
}

// Step-wise AP: every distinct score is tried as a threshold from high to low.
inline double exhaustive_ap(std::span<const double> y, std::span<const double> s) {
  std::vector<double> thresholds(s.begin(), s.end());
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  double positives = 0.0;
  for (double v : y) positives += v;
  double ap = 0.0, prev_recall = 0.0;
  for (double t : thresholds) {
    double tp = 0.0, fp = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (s[i] < t) continue;
      if (y[i] == 1.0) tp += 1.0;
      else fp += 1.0;
    }
    const double recall = tp / positives;
    ap += (recall - prev_recall) * (tp / (tp + fp));
    prev_recall = recall;
  }
  return ap;
}

inline double pearson(std::span<const double> a, std::span<const double> b) {
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i] / n;
    mb += b[i] / n;
  }
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

// GPD distribution function written out per branch.
inline double gpd_cdf(double y, double xi, double sigma) {
  if (y <= 0.0) return 0.0;
  if (xi == 0.0) return 1.0 - std::exp(-y / sigma);
  const double z = 1.0 + xi * y / sigma;
  if (z <= 0.0) return 1.0;
  return 1.0 - std::pow(z, -1.0 / xi);
}

inline double gpd_loglik(std::span<const double> y, double xi, double sigma) {
  double ll = 0.0;
  for (double v : y) {
    if (std::abs(xi) < 1e-12) {
      ll += -std::log(sigma) - v / sigma;
    } else {
      const double z = 1.0 + xi * v / sigma;
      if (z <= 0.0) return -INFINITY;
      ll += -std::log(sigma) - (1.0 / xi + 1.0) * std::log(z);
    }
  }
  return ll;
}

// Two-sided Kolmogorov-Smirnov distance between a sample and a continuous CDF.
inline double ks_statistic(std::vector<double> x, const std::function<double(double)>& cdf) {
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double f = cdf(x[i]);
    d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
  }
  return d;
}

// Inverse-transform GPD draws, independent of the library sampler.
inline std::vector<double> gpd_draws(std::size_t n, double xi, double sigma, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> out(n);
  for (auto& v : out) {
    const double p = u(rng);
    v = xi == 0.0 ? -sigma * std::log1p(-p) : sigma / xi * (std::pow(1.0 - p, -xi) - 1.0);
  }
  return out;
}

struct Counts {
  double tp = 0, tn = 0, fp = 0, fn = 0;
};

inline Counts count(std::span<const double> y, std::span<const double> s, double thr) {
  Counts c;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const bool pred = s[i] >= thr;
    if (y[i] == 1.0) (pred ? c.tp : c.fn) += 1;
    else (pred ? c.fp : c.tn) += 1;
  }
  return c;
}

inline double f1(const Counts& c) { return c.tp == 0 ? 0.0 : 2.0 * c.tp / (2.0 * c.tp + c.fp + c.fn); }

}  // namespace oracle

namespace fixture {

// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("tailcast_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

}  // namespace fixture
