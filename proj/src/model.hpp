#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "autodiff.hpp"
#include "dataset.hpp"
#include "graph.hpp"

namespace tailcast::model {

enum class AttentionBias { MaskOnly, LogBias };
const char* to_string(AttentionBias b) noexcept;
std::optional<AttentionBias> parse_attention_bias(std::string_view s);

inline constexpr double kLeakySlope = 0.01;

struct ModelConfig {
  dataset::FeatureMode mode = dataset::FeatureMode::Di;
  std::size_t c_in = 10;
  std::size_t c_out = 3;
  std::size_t n_features = dataset::kDiFeatures;
  std::size_t n_layers = 2;
  std::size_t hidden_dim = 64;
  std::size_t n_heads = 4;
  AttentionBias attention_bias = AttentionBias::LogBias;
  double leaky_slope = kLeakySlope;
  std::uint64_t seed = 0;

  bool operator==(const ModelConfig&) const = default;
};

// Empty when valid.
std::string validate(const ModelConfig& config);

// Mask and additive log-bias derived once from the effective adjacency.
struct AttentionGraph {
  std::size_t n = 0;
  ad::Tensor mask;      // [n, n], 1 where a_ij > 0
  ad::Tensor log_bias;  // [n, n], ln a_ij where a_ij > 0, else 0
};

// Throws IsolatedNode when a row has no positive entry (self-loop included).
AttentionGraph make_attention_graph(const graph::Matrix& a);

struct GatLayerParams {
  std::vector<ad::Var> weight;  // per head [d_in, hidden]
  std::vector<ad::Var> att_src; // per head [hidden, 1], first half of the attention vector
  std::vector<ad::Var> att_dst; // per head [hidden, 1], second half
};

class GatModel {
 public:
  GatModel() = default;
  // Glorot-uniform initialisation, deterministic per seed.
  explicit GatModel(const ModelConfig& config);

  const ModelConfig& config() const noexcept { return config_; }

  // x: [B, N, c_in * F] -> probabilities [B, N, c_out]
  ad::Var forward(const ad::Var& x, const AttentionGraph& graph) const;
  ad::Var logits(const ad::Var& x, const AttentionGraph& graph) const;

  // Single window (c_in x N x F, as produced by WindowSet) -> C_out x N probabilities.
  ad::Tensor predict_window(std::span<const double> window, const AttentionGraph& graph) const;

  // Attention of one head of one layer for node embeddings h [N, d_in].
  ad::Tensor attention_coefficients(const ad::Tensor& h, std::size_t layer, std::size_t head,
                                    const AttentionGraph& graph) const;

  std::vector<ad::Var> parameters() const;
  std::vector<std::pair<std::string, ad::Var>> named_parameters() const;

  const GatLayerParams& layer(std::size_t i) const { return layers_.at(i); }

 private:
  ad::Var attention(const ad::Var& wh, const ad::Var& att_src, const ad::Var& att_dst,
                    const AttentionGraph& graph) const;

  ModelConfig config_;
  ad::Var in_weight_, in_bias_;
  std::vector<GatLayerParams> layers_;
  ad::Var out_weight_, out_bias_;
};

// Reorders a window from [c_in][N][F] into per-node rows [N][c_in * F].
void window_to_node_rows(std::span<const double> window, std::size_t c_in, std::size_t n, std::size_t f,
                         std::span<double> out);

struct TrainedModel {
  GatModel model;
  dataset::NormStats norm;
  std::vector<std::string> station_ids;
  graph::Matrix adjacency;
  std::vector<double> station_weights;
  std::vector<double> t90;
  std::vector<evt::GpdDescriptors> descriptors;  // empty in baseline mode
  dataset::SplitSpec split;
};

inline constexpr char kCheckpointMagic[] = "DIGNN1";

void save_checkpoint(const TrainedModel& m, const std::filesystem::path& path);
std::vector<std::uint8_t> serialize_checkpoint(const TrainedModel& m);
TrainedModel load_checkpoint(const std::filesystem::path& path);
TrainedModel deserialize_checkpoint(std::span<const std::uint8_t> bytes);

}  // namespace tailcast::model
