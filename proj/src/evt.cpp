#include "evt.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "csv.hpp"
#include "error.hpp"
#include "stats.hpp"

namespace tailcast::evt {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

using Point = std::array<double, 2>;

struct NelderMeadResult {
  Point x{};
  double f = kInf;
  int iterations = 0;
  bool converged = false;
};

template <class F>
NelderMeadResult nelder_mead(F&& f, Point start, Point step, int max_iter = 4000, double ftol = 1e-13,
                             double xtol = 1e-11) {
  std::array<Point, 3> p{start, start, start};
  p[1][0] += step[0];
  p[2][1] += step[1];
  std::array<double, 3> fv{f(p[0]), f(p[1]), f(p[2])};
  NelderMeadResult res;
  for (int it = 0; it < max_iter; ++it) {
    res.iterations = it + 1;
    std::array<int, 3> idx{0, 1, 2};
    std::sort(idx.begin(), idx.end(), [&](int a, int b) { return fv[a] < fv[b]; });
    const int best = idx[0], mid = idx[1], worst = idx[2];
    double spread = 0.0;
    for (int k = 0; k < 2; ++k)
      spread = std::max({spread, std::abs(p[mid][k] - p[best][k]), std::abs(p[worst][k] - p[best][k])});
    if (std::isfinite(fv[worst]) && std::abs(fv[worst] - fv[best]) <= ftol * (1.0 + std::abs(fv[best])) &&
        spread <= xtol) {
      res.converged = true;
      break;
    }
    Point c{(p[best][0] + p[mid][0]) / 2.0, (p[best][1] + p[mid][1]) / 2.0};
    auto along = [&](double t) { return Point{c[0] + t * (p[worst][0] - c[0]), c[1] + t * (p[worst][1] - c[1])}; };
    const Point xr = along(-1.0);
    const double fr = f(xr);
    if (fr < fv[best]) {
      const Point xe = along(-2.0);
      const double fe = f(xe);
      if (fe < fr) {
        p[worst] = xe, fv[worst] = fe;
      } else {
        p[worst] = xr, fv[worst] = fr;
      }
      continue;
    }
    if (fr < fv[mid]) {
      p[worst] = xr, fv[worst] = fr;
      continue;
    }
    const bool outside = fr < fv[worst];
    const Point xc = along(outside ? -0.5 : 0.5);
    const double fc = f(xc);
    if (fc < (outside ? fr : fv[worst])) {
      p[worst] = xc, fv[worst] = fc;
      continue;
    }
    for (int k : {mid, worst}) {
      p[k] = Point{p[best][0] + 0.5 * (p[k][0] - p[best][0]), p[best][1] + 0.5 * (p[k][1] - p[best][1])};
      fv[k] = f(p[k]);
    }
  }
  const auto b = static_cast<std::size_t>(std::min_element(fv.begin(), fv.end()) - fv.begin());
  res.x = p[b];
  res.f = fv[b];
  return res;
}

}  // namespace

Exceedances extract_exceedances(std::span<const double> t_max, double quantile) {
  if (!(quantile > 0.5 && quantile < 1.0))
    throw Error(ErrorKind::InvalidParams, "quantile must lie in (0.5, 1), got " + std::to_string(quantile));
  if (t_max.size() < kMinObservations)
    throw Error(ErrorKind::TooFewObservations,
                "need >= " + std::to_string(kMinObservations) + " values, got " + std::to_string(t_max.size()));
  std::vector<double> sorted(t_max.begin(), t_max.end());
  std::sort(sorted.begin(), sorted.end());
  Exceedances out;
  out.threshold = stats::quantile_sorted(sorted, quantile);
  for (double v : t_max)
    if (v > out.threshold) out.values.push_back(v - out.threshold);
  return out;
}

double gpd_cdf(double y, double xi, double sigma) {
  if (!(sigma > 0.0)) throw Error(ErrorKind::InvalidParams, "sigma must be > 0");
  if (y < 0.0) throw Error(ErrorKind::OutOfSupport, "y < 0");
  if (std::abs(xi) < kXiZero) return -std::expm1(-y / sigma);
  const double z = xi * y / sigma;
  if (xi < 0.0 && z < -1.0) throw Error(ErrorKind::OutOfSupport, "y beyond upper endpoint -sigma/xi");
  if (z == -1.0) return 1.0;
  return std::clamp(-std::expm1(-std::log1p(z) / xi), 0.0, 1.0);
}

double gpd_log_likelihood(std::span<const double> y, double xi, double sigma) {
  if (!(sigma > 0.0)) return -kInf;
  const double n = static_cast<double>(y.size());
  if (std::abs(xi) < kXiZero) {
    const double s = std::accumulate(y.begin(), y.end(), 0.0);
    return -n * std::log(sigma) - s / sigma;
  }
  double acc = 0.0;
  for (double v : y) {
    const double z = xi * v / sigma;
    if (!(z > -1.0)) return -kInf;
    acc += std::log1p(z);
  }
  return -n * std::log(sigma) - (1.0 + 1.0 / xi) * acc;
}

GpdFit fit_gpd_mle(std::span<const double> input, const FitOptions& options) {
  // Sorted copy: the likelihood sums in a fixed order, so the fit ignores input order bit for bit.
  std::vector<double> sorted(input.begin(), input.end());
  std::sort(sorted.begin(), sorted.end());
  const std::span<const double> y(sorted);
  if (y.size() < options.min_exceedances)
    throw Error(ErrorKind::TooFewExceedances, "need >= " + std::to_string(options.min_exceedances) +
                                                  " exceedances, got " + std::to_string(y.size()));
  for (double v : y)
    if (!(v > 0.0) || !std::isfinite(v)) throw Error(ErrorKind::InvalidParams, "exceedances must be finite and > 0");
  const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
  if (*lo == *hi) throw Error(ErrorKind::NonFiniteLikelihood, "all exceedances equal; likelihood unbounded at xi -> -1");
  const double ymax = *hi;
  const double ybar = stats::mean(y);

  // xi is projected onto the clamp; the quadratic term keeps the simplex from drifting off it.
  auto objective = [&](const Point& p) {
    const double xi = std::clamp(p[0], -kXiClamp, kXiClamp);
    const double excess = p[0] - xi;
    const double ll = gpd_log_likelihood(y, xi, std::exp(p[1]));
    return std::isfinite(ll) ? -ll + 1e3 * excess * excess : kInf;
  };

  NelderMeadResult best;
  int iterations = 0;
  for (double xi0 : {-0.2, 0.05, 0.3}) {
    double sigma0 = ybar;
    if (xi0 < 0.0) sigma0 = std::max(sigma0, -xi0 * ymax * 1.05);
    auto r = nelder_mead(objective, Point{xi0, std::log(sigma0)}, Point{0.1, 0.1});
    iterations += r.iterations;
    // Restart from the optimum to escape a prematurely collapsed simplex.
    auto r2 = nelder_mead(objective, r.x, Point{0.02, 0.02});
    iterations += r2.iterations;
    if (r2.f <= r.f) r = r2;
    if (r.f < best.f) best = r;
  }
  if (!std::isfinite(best.f)) throw Error(ErrorKind::NonFiniteLikelihood, "no feasible parameters found");

  GpdFit fit;
  fit.xi = std::clamp(best.x[0], -kXiClamp, kXiClamp);
  fit.sigma = std::exp(best.x[1]);
  fit.hit_clamp = std::abs(fit.xi) >= kXiClamp;
  if (std::abs(fit.xi) < kXiZero) {
    fit.xi = 0.0;
    fit.sigma = ybar;
  }
  fit.log_likelihood = gpd_log_likelihood(y, fit.xi, fit.sigma);
  if (!std::isfinite(fit.log_likelihood)) throw Error(ErrorKind::NonFiniteLikelihood, "non-finite optimum");
  fit.converged = best.converged;
  fit.iterations = iterations;
  return fit;
}

GpdDescriptors compute_descriptors(std::span<const double> t_max, double quantile, const FitOptions& options) {
  const auto [lo, hi] = std::minmax_element(t_max.begin(), t_max.end());
  if (t_max.size() >= kMinObservations && *lo == *hi)
    throw Error(ErrorKind::DegenerateSeries, "constant T_max series has no exceedances");
  const auto ex = extract_exceedances(t_max, quantile);
  GpdDescriptors d;
  d.threshold_u = ex.threshold;
  d.n_exceed = ex.values.size();
  d.mu = stats::mean(t_max);
  d.variance = stats::sample_variance(t_max);
  d.q95 = stats::quantile(std::vector<double>(t_max.begin(), t_max.end()), 0.95);
  if (ex.values.empty()) throw Error(ErrorKind::DegenerateSeries, "no values above the threshold");
  const auto fit = fit_gpd_mle(ex.values, options);
  d.xi = fit.xi;
  d.sigma = fit.sigma;
  d.converged = fit.converged;
  d.hit_clamp = fit.hit_clamp;
  return d;
}

std::string fit_report_csv(const std::vector<FitReportRow>& rows) {
  std::ostringstream os;
  os << kFitReportHeader << '\n';
  for (const auto& r : rows) {
    const auto& d = r.descriptors;
    const bool ok = r.error.empty();
    os << r.station_id << ',' << csv::format_double(d.threshold_u) << ',' << (ok ? csv::format_double(d.xi) : "")
       << ',' << (ok ? csv::format_double(d.sigma) : "") << ',' << csv::format_double(d.mu) << ','
       << csv::format_double(d.variance) << ',' << csv::format_double(d.q95) << ',' << d.n_exceed << ','
       << (ok && d.converged ? "true" : "false") << '\n';
  }
  return os.str();
}

}  // namespace tailcast::evt
