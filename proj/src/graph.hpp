#pragma once

#include <optional>
#include <string>
#include <vector>

#include "evt.hpp"

namespace tailcast::graph {

// Dense row-major square matrix.
struct Matrix {
  std::size_t n = 0;
  std::vector<double> data;

  Matrix() = default;
  explicit Matrix(std::size_t size, double fill = 0.0) : n(size), data(size * size, fill) {}
  double& operator()(std::size_t i, std::size_t j) { return data[i * n + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * n + j]; }
  bool operator==(const Matrix&) const = default;
};

enum class NegativePolicy { ClampZero, Keep };

struct GraphSpec {
  std::vector<std::string> station_ids;
  Matrix rho;
  std::vector<double> w;
  Matrix a;
  std::optional<double> sparsify_threshold;
  std::vector<std::string> warnings;
};

// Pearson correlation over pairwise-complete days. series[s][t] is NaN when missing.
Matrix pearson_adjacency(const std::vector<std::vector<double>>& series,
                         const std::vector<std::string>& station_ids = {});

// w_i = 1 + |xi_i| + sigma_i / max_j sigma_j
std::vector<double> station_weights(const std::vector<evt::GpdDescriptors>& descriptors);

// a_ij = rho'_ij * w_i * w_j with rho' = max(rho, 0) under ClampZero. Off-diagonal
// entries with |a_ij| below the sparsify threshold become exact zeros.
Matrix weighted_adjacency(const Matrix& rho, const std::vector<double>& w,
                          std::optional<double> sparsify_threshold = std::nullopt,
                          NegativePolicy policy = NegativePolicy::ClampZero);

// Connectivity over edges with a_ij > 0.
bool is_connected(const Matrix& a);

GraphSpec build_graph(const std::vector<std::string>& station_ids, const std::vector<std::vector<double>>& series,
                      const std::vector<double>& w, std::optional<double> sparsify_threshold = std::nullopt);

std::string matrix_csv(const Matrix& m, const std::vector<std::string>& station_ids);
inline constexpr const char* kWeightsHeader = "station_id,w,xi,sigma";
std::string weights_csv(const std::vector<std::string>& station_ids, const std::vector<double>& w,
                        const std::vector<evt::GpdDescriptors>& descriptors);

}  // namespace tailcast::graph
