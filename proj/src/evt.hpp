#pragma once

#include <span>
#include <string>
#include <vector>

namespace tailcast::evt {

inline constexpr double kDefaultQuantile = 0.90;
inline constexpr std::size_t kMinObservations = 100;
inline constexpr std::size_t kDefaultMinExceedances = 30;
// Below this |xi| the exponential limit is used.
inline constexpr double kXiZero = 1e-8;
inline constexpr double kXiClamp = 0.9;

struct Exceedances {
  double threshold = 0.0;
  std::vector<double> values;  // each strictly > 0
};

// Threshold is the type-7 empirical quantile; returns x - threshold for x > threshold.
Exceedances extract_exceedances(std::span<const double> t_max, double quantile = kDefaultQuantile);

// H(y | xi, sigma). Throws OutOfSupport for y < 0 or y beyond -sigma/xi when xi < 0.
double gpd_cdf(double y, double xi, double sigma);

// GPD log-likelihood; -inf outside the feasible region 1 + xi*y/sigma > 0.
double gpd_log_likelihood(std::span<const double> y, double xi, double sigma);

struct FitOptions {
  std::size_t min_exceedances = kDefaultMinExceedances;
};

struct GpdFit {
  double xi = 0.0;
  double sigma = 0.0;
  double log_likelihood = 0.0;
  bool converged = false;
  // xi ended on the [-0.9, 0.9] optimisation clamp.
  bool hit_clamp = false;
  int iterations = 0;
};

// Maximum likelihood over (xi, ln sigma) by multi-start Nelder-Mead.
GpdFit fit_gpd_mle(std::span<const double> exceedances, const FitOptions& options = {});

struct GpdDescriptors {
  double threshold_u = 0.0;
  double xi = 0.0;
  double sigma = 0.0;
  double mu = 0.0;
  double variance = 0.0;
  double q95 = 0.0;
  std::size_t n_exceed = 0;
  bool converged = false;
  bool hit_clamp = false;
};

GpdDescriptors compute_descriptors(std::span<const double> t_max, double quantile = kDefaultQuantile,
                                   const FitOptions& options = {});

struct FitReportRow {
  std::string station_id;
  GpdDescriptors descriptors;
  std::string error;  // empty when the fit succeeded
};

inline constexpr const char* kFitReportHeader = "station_id,u,xi,sigma,mu,variance,q95,n_exceed,converged";
std::string fit_report_csv(const std::vector<FitReportRow>& rows);

}  // namespace tailcast::evt
