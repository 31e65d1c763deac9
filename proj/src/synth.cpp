#include "synth.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <algorithm>
#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <numbers>
#include <string>

#include "error.hpp"

namespace tailcast::synth {

namespace {

constexpr double kPeakDoy = 196.0;  // mid-July
constexpr double kRefSds = 4.0;     // excursion reference level above the seasonal peak, in stationary sds

double round2(double v) { return std::round(v * 100.0) / 100.0; }

}  // namespace

std::string validate(const SynthConfig& c) {
  if (c.n_stations < 1) return "n_stations must be >= 1";
  if (c.n_years < 1) return "n_years must be >= 1";
  if (!(c.ar1_coeff >= 0.0 && c.ar1_coeff < 1.0)) return "ar1_coeff must lie in [0, 1)";
  if (!(c.noise_sd >= 0.0)) return "noise_sd must be >= 0";
  if (!(c.gpd_sigma > 0.0)) return "gpd_sigma must be > 0";
  if (!std::isfinite(c.gpd_xi) || c.gpd_xi >= 1.0) return "gpd_xi must be finite and < 1";
  // exceed_prob = 0 is accepted to switch excursions off entirely.
  if (!(c.exceed_prob >= 0.0 && c.exceed_prob <= 0.2)) return "exceed_prob must lie in (0, 0.2]";
  if (!(c.spatial_length_scale > 0.0)) return "spatial_length_scale must be > 0";
  if (!(c.event_persistence >= 0.0 && c.event_persistence < 1.0)) return "event_persistence must lie in [0, 1)";
  if (!(c.amplitude_persistence >= 0.0 && c.amplitude_persistence < 1.0))
    return "amplitude_persistence must lie in [0, 1)";
  return {};
}

std::vector<double> sample_gpd(std::size_t n, double xi, double sigma, Rng& rng) {
  if (!(sigma > 0.0)) throw Error(ErrorKind::InvalidParams, "sigma must be > 0");
  if (n < 1) throw Error(ErrorKind::InvalidParams, "n must be >= 1");
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> out(n);
  for (auto& y : out) {
    const double u = 1.0 - unif(rng);  // (0, 1]
    y = std::abs(xi) < 1e-8 ? -sigma * std::log(u) : sigma * std::expm1(-xi * std::log(u)) / xi;
  }
  return out;
}

double distance_km(const ingest::StationMeta& a, const ingest::StationMeta& b) {
  constexpr double kEarthRadiusKm = 6371.0;
  constexpr double rad = std::numbers::pi / 180.0;
  const double dlat = (b.lat - a.lat) * rad;
  const double dlon = (b.lon - a.lon) * rad;
  const double h = std::sin(dlat / 2) * std::sin(dlat / 2) +
                   std::cos(a.lat * rad) * std::cos(b.lat * rad) * std::sin(dlon / 2) * std::sin(dlon / 2);
  return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(h)));
}

ingest::StationData generate(const SynthConfig& c, SynthTruth* truth) {
  if (auto why = validate(c); !why.empty()) throw Error(ErrorKind::InvalidConfig, why);
  Rng rng(c.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const auto n = static_cast<std::size_t>(c.n_stations);

  ingest::StationData data;
  data.stations.resize(n);
  std::vector<double> base_mean(n);
  for (std::size_t s = 0; s < n; ++s) {
    auto& m = data.stations[s].meta;
    char id[32];
    std::snprintf(id, sizeof id, "ST%03zu", s + 1);
    m.station_id = id;
    m.name = std::string("Synthetic ") + id;
    m.lon = round2(-130.0 + 15.0 * unif(rng));
    m.lat = round2(48.5 + 9.5 * unif(rng));
    base_mean[s] = 14.0 - 0.5 * (m.lat - 49.0) + normal(rng);
  }

  Eigen::MatrixXd kernel(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      kernel(i, j) = std::exp(-distance_km(data.stations[i].meta, data.stations[j].meta) / c.spatial_length_scale) +
                     (i == j ? 1e-9 : 0.0);
  const Eigen::MatrixXd chol = Eigen::LLT<Eigen::MatrixXd>(kernel).matrixL();

  const Date first(c.start_year, 1, 1);
  const Date end(c.start_year + c.n_years, 1, 1);
  const int n_days = end - first;

  const double stat_sd = c.noise_sd / std::sqrt(1.0 - c.ar1_coeff * c.ar1_coeff);
  const double event_cut = c.exceed_prob > 0.0
                               ? boost::math::quantile(boost::math::normal(), 1.0 - c.exceed_prob)
                               : std::numeric_limits<double>::infinity();
  const double pe = c.event_persistence;
  const double pa = c.amplitude_persistence;

  std::vector<double> reference(n), peak(n);
  for (std::size_t s = 0; s < n; ++s) {
    peak[s] = base_mean[s] + c.seasonal_amp;
    reference[s] = peak[s] + kRefSds * stat_sd;
  }
  if (truth) {
    truth->excursion.assign(n, std::vector<bool>(static_cast<std::size_t>(n_days), false));
    truth->reference_level = reference;
    truth->seasonal_peak = peak;
  }

  auto correlated = [&] {
    Eigen::VectorXd z(n);
    for (std::size_t s = 0; s < n; ++s) z[s] = normal(rng);
    return Eigen::VectorXd(chol * z);
  };

  Eigen::VectorXd anomaly = stat_sd * correlated();
  Eigen::VectorXd latent = correlated();
  Eigen::VectorXd copula(n);
  for (std::size_t s = 0; s < n; ++s) copula[s] = normal(rng);

  for (auto& st : data.stations) st.records.reserve(static_cast<std::size_t>(n_days));
  for (int d = 0; d < n_days; ++d) {
    const Date date = first + d;
    if (d > 0) {
      anomaly = c.ar1_coeff * anomaly + c.noise_sd * correlated();
      latent = pe * latent + std::sqrt(1.0 - pe * pe) * correlated();
      for (std::size_t s = 0; s < n; ++s) copula[s] = pa * copula[s] + std::sqrt(1.0 - pa * pa) * normal(rng);
    }
    const double season = std::cos(2.0 * std::numbers::pi * (date.day_of_year() - kPeakDoy) / 365.25);
    for (std::size_t s = 0; s < n; ++s) {
      const double base = base_mean[s] + c.seasonal_amp * season + anomaly[s];
      const bool excursion = date.is_summer() && latent[s] > event_cut;
      double t_max = base;
      if (excursion) {
        // Upper-tail uniform from the copula, mapped through the GPD inverse CDF.
        const double u = std::clamp(0.5 * std::erfc(copula[s] / std::numbers::sqrt2), 1e-300, 1.0);
        const double amp = std::abs(c.gpd_xi) < 1e-8 ? -c.gpd_sigma * std::log(u)
                                                     : c.gpd_sigma * std::expm1(-c.gpd_xi * std::log(u)) / c.gpd_xi;
        t_max = std::max(base, reference[s] + amp);
        if (truth) truth->excursion[s][static_cast<std::size_t>(d)] = true;
      }
      const double dtr = std::max(2.0, 9.0 + 1.5 * normal(rng));
      const double avg_frac = std::clamp(0.5 + 0.05 * normal(rng), 0.2, 0.8);
      const double dew_gap = std::abs(2.0 + 1.5 * normal(rng));
      const double wind = std::max(0.0, 3.0 + 1.5 * normal(rng));
      const bool wet = unif(rng) < (excursion ? 0.05 : 0.3);
      const double rain = -4.0 * std::log(1.0 - unif(rng));
      const double pres_noise = normal(rng);

      ingest::DailyRecord r;
      r.date = date;
      r.t_max = round2(t_max);
      r.t_min = round2(t_max - dtr);
      r.t_avg = std::clamp(round2(t_max - dtr * (1.0 - avg_frac)), *r.t_min, *r.t_max);
      r.t_dew = round2(*r.t_min - dew_gap);
      // Magnus relation between dew point and mean temperature.
      auto magnus = [](double t) { return 17.625 * t / (243.04 + t); };
      r.rh = std::clamp(round2(100.0 * std::exp(magnus(*r.t_dew) - magnus(*r.t_avg))), 1.0, 100.0);
      r.wind = round2(wind);
      r.precip = wet ? round2(rain) : 0.0;
      r.pressure = std::max(80.0, round2(100.8 + (excursion ? 0.8 : 0.0) + 0.6 * pres_noise));
      data.stations[s].records.push_back(r);
    }
  }
  return data;
}

}  // namespace tailcast::synth
