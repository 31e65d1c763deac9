#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "ingest.hpp"

namespace tailcast::synth {

using Rng = std::mt19937_64;

struct SynthConfig {
  int n_stations = 71;
  int n_years = 15;
  int start_year = 2009;
  std::uint64_t seed = 7;
  double seasonal_amp = 10.0;    // degC, half peak-to-trough of the annual T_max cycle
  double ar1_coeff = 0.7;        // day-to-day persistence of the anomaly
  double noise_sd = 1.5;         // degC, AR(1) innovation sd
  double gpd_xi = 0.2;
  double gpd_sigma = 5.0;        // degC
  double exceed_prob = 0.15;     // stationary fraction of summer days inside an excursion
  double spatial_length_scale = 300.0;  // km
  double event_persistence = 0.93;      // AR(1) coefficient of the latent excursion process
  double amplitude_persistence = 0.7;   // day-to-day correlation of excursion sizes (Gaussian copula)
};

// Empty when valid, otherwise names the offending field.
std::string validate(const SynthConfig& config);

// Inverse-CDF GPD sampling; xi = 0 uses the exponential branch.
std::vector<double> sample_gpd(std::size_t n, double xi, double sigma, Rng& rng);

struct SynthTruth {
  // excursion[s][d] is true when station s is inside a generated excursion on day d.
  std::vector<std::vector<bool>> excursion;
  std::vector<double> reference_level;  // degC, level excursions are measured from
  std::vector<double> seasonal_peak;    // degC
};

ingest::StationData generate(const SynthConfig& config, SynthTruth* truth = nullptr);

// Great-circle distance in km.
double distance_km(const ingest::StationMeta& a, const ingest::StationMeta& b);

}  // namespace tailcast::synth
