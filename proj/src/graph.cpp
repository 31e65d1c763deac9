#include "graph.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "csv.hpp"
#include "error.hpp"

namespace tailcast::graph {

Matrix pearson_adjacency(const std::vector<std::vector<double>>& series, const std::vector<std::string>& ids) {
  const std::size_t n = series.size();
  auto name = [&](std::size_t i) { return i < ids.size() ? ids[i] : std::to_string(i); };
  Matrix rho(n);
  for (std::size_t i = 0; i < n; ++i) {
    rho(i, i) = 1.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      const auto& x = series[i];
      const auto& y = series[j];
      const std::size_t len = std::min(x.size(), y.size());
      double mx = 0.0, my = 0.0;
      std::size_t t_count = 0;
      for (std::size_t t = 0; t < len; ++t) {
        if (std::isnan(x[t]) || std::isnan(y[t])) continue;
        mx += x[t];
        my += y[t];
        ++t_count;
      }
      if (t_count < 2)
        throw Error(ErrorKind::TooFewObservations, "stations " + name(i) + "/" + name(j) + " share < 2 dates");
      mx /= static_cast<double>(t_count);
      my /= static_cast<double>(t_count);
      double sxy = 0.0, sxx = 0.0, syy = 0.0;
      for (std::size_t t = 0; t < len; ++t) {
        if (std::isnan(x[t]) || std::isnan(y[t])) continue;
        sxy += (x[t] - mx) * (y[t] - my);
        sxx += (x[t] - mx) * (x[t] - mx);
        syy += (y[t] - my) * (y[t] - my);
      }
      if (!(sxx > 0.0)) throw Error(ErrorKind::ZeroVarianceStation, name(i));
      if (!(syy > 0.0)) throw Error(ErrorKind::ZeroVarianceStation, name(j));
      const double r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
      rho(i, j) = r;
      rho(j, i) = r;
    }
  }
  if (n == 1 && series[0].size() >= 2) {
    const auto [lo, hi] = std::minmax_element(series[0].begin(), series[0].end());
    if (*lo == *hi) throw Error(ErrorKind::ZeroVarianceStation, name(0));
  }
  return rho;
}

std::vector<double> station_weights(const std::vector<evt::GpdDescriptors>& d) {
  if (d.empty()) throw Error(ErrorKind::MissingDescriptors, "no station descriptors");
  double max_sigma = 0.0;
  for (const auto& x : d) {
    if (!(x.sigma > 0.0)) throw Error(ErrorKind::InvalidParams, "sigma must be > 0");
    max_sigma = std::max(max_sigma, x.sigma);
  }
  std::vector<double> w(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) w[i] = 1.0 + std::abs(d[i].xi) + d[i].sigma / max_sigma;
  return w;
}

Matrix weighted_adjacency(const Matrix& rho, const std::vector<double>& w, std::optional<double> threshold,
                          NegativePolicy policy) {
  if (w.size() != rho.n) throw Error(ErrorKind::ShapeMismatch, "weights length differs from matrix size");
  Matrix a(rho.n);
  for (std::size_t i = 0; i < rho.n; ++i) {
    for (std::size_t j = 0; j < rho.n; ++j) {
      const double r = policy == NegativePolicy::ClampZero ? std::max(rho(i, j), 0.0) : rho(i, j);
      // Weight product first, so a(i, j) and a(j, i) round identically.
      double v = r * (w[i] * w[j]);
      if (threshold && i != j && std::abs(v) < *threshold) v = 0.0;
      a(i, j) = v;
    }
  }
  return a;
}

bool is_connected(const Matrix& a) {
  if (a.n == 0) return true;
  std::vector<bool> seen(a.n, false);
  std::vector<std::size_t> stack{0};
  seen[0] = true;
  while (!stack.empty()) {
    const std::size_t i = stack.back();
    stack.pop_back();
    for (std::size_t j = 0; j < a.n; ++j)
      if (!seen[j] && (a(i, j) > 0.0 || a(j, i) > 0.0)) {
        seen[j] = true;
        stack.push_back(j);
      }
  }
  return std::all_of(seen.begin(), seen.end(), [](bool b) { return b; });
}

GraphSpec build_graph(const std::vector<std::string>& ids, const std::vector<std::vector<double>>& series,
                      const std::vector<double>& w, std::optional<double> threshold) {
  GraphSpec g;
  g.station_ids = ids;
  g.rho = pearson_adjacency(series, ids);
  g.w = w;
  g.a = weighted_adjacency(g.rho, w, threshold);
  g.sparsify_threshold = threshold;
  if (!is_connected(g.a)) g.warnings.push_back("station graph is disconnected at the chosen sparsification threshold");
  return g;
}

std::string matrix_csv(const Matrix& m, const std::vector<std::string>& ids) {
  std::ostringstream os;
  os << "station_id";
  for (const auto& id : ids) os << ',' << id;
  os << '\n';
  for (std::size_t i = 0; i < m.n; ++i) {
    os << ids[i];
    for (std::size_t j = 0; j < m.n; ++j) os << ',' << csv::format_double(m(i, j));
    os << '\n';
  }
  return os.str();
}

std::string weights_csv(const std::vector<std::string>& ids, const std::vector<double>& w,
                        const std::vector<evt::GpdDescriptors>& d) {
  std::ostringstream os;
  os << kWeightsHeader << '\n';
  for (std::size_t i = 0; i < ids.size(); ++i) {
    os << ids[i] << ',' << csv::format_double(w[i]) << ',';
    if (i < d.size()) os << csv::format_double(d[i].xi) << ',' << csv::format_double(d[i].sigma);
    else os << ',';
    os << '\n';
  }
  return os.str();
}

}  // namespace tailcast::graph
