#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "autodiff.hpp"
#include "dataset.hpp"
#include "metrics.hpp"
#include "model.hpp"

namespace tailcast::training {

enum class LossKind { WeightedF1, Bce };
const char* to_string(LossKind k) noexcept;
std::optional<LossKind> parse_loss_kind(std::string_view s);

inline constexpr double kLossEps = 1e-7;

struct LossConfig {
  LossKind kind = LossKind::WeightedF1;
  double beta = 1.0;
  std::vector<double> station_weights;  // unit weights when empty
  double eps = kLossEps;
};

// Empty when valid. With require_heavy_weights every weight must be >= 1.
std::string validate(const LossConfig& config, bool require_heavy_weights);

struct WeightedCounts {
  double tp = 0, fp = 0, fn = 0;
};

// y and y_hat laid out [horizon][station]; w has one entry per station.
WeightedCounts weighted_counts(std::span<const double> y, std::span<const double> y_hat, std::span<const double> w);

// 1 - (1+b^2) tp / ((1+b^2) tp + b^2 fn + fp + eps)
double weighted_f1_loss(const WeightedCounts& c, double beta = 1.0, double eps = kLossEps);

// Loss over predictions with weights rescaled to unit mean, which makes it invariant to w -> c*w.
double weighted_f1_loss(std::span<const double> y, std::span<const double> y_hat, std::span<const double> w,
                        double beta = 1.0, double eps = kLossEps);

// Mean binary cross-entropy with y_hat clamped to [eps, 1 - eps].
double bce_loss(std::span<const double> y, std::span<const double> y_hat, double eps = kLossEps);

// Differentiable versions over batched probabilities [B, N, C_out] with targets of the same shape.
ad::Var weighted_f1_loss(const ad::Var& probs, const ad::Tensor& y, std::span<const double> w, double beta = 1.0,
                         double eps = kLossEps);
ad::Var bce_loss(const ad::Var& probs, const ad::Tensor& y, double eps = kLossEps);
ad::Var loss(const LossConfig& config, const ad::Var& probs, const ad::Tensor& y);
// Same loss evaluated on flat [sample][horizon][station] predictions.
double loss_value(const LossConfig& config, std::span<const double> y, std::span<const double> y_hat,
                  std::size_t n_stations);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::vector<ad::Tensor> m, v;
};

AdamState make_adam(const std::vector<ad::Var>& params, const AdamConfig& config = {});
// Applies one update from the accumulated gradients. Throws NonFiniteGradient before touching
// any parameter if a gradient entry is not finite.
void adam_step(const std::vector<ad::Var>& params, AdamState& state);

struct Batch {
  ad::Tensor x;  // [B, N, c_in * F]
  ad::Tensor y;  // [B, N, c_out]
};
Batch make_batch(const dataset::WindowSet& windows, std::span<const std::size_t> indices);

// Flat probabilities and labels laid out [window][horizon][station].
struct Predictions {
  std::vector<double> y;
  std::vector<double> p;
};
Predictions predict(const model::GatModel& model, const dataset::WindowSet& windows,
                    const model::AttentionGraph& graph, std::size_t batch_size = 64);

struct Schedule {
  std::size_t max_epochs = 100;
  std::size_t batch_size = 64;
  std::size_t patience = 10;
  double min_delta = 1e-4;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0;
  double val_loss = 0;
  metrics::ScalarMetrics val;
};

enum class StopReason { MaxEpochs, EarlyStopping };
const char* to_string(StopReason r) noexcept;

struct TrainReport {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_val_loss = 0;
  StopReason stop_reason = StopReason::MaxEpochs;
};

// Minibatch training with per-epoch seeded shuffling. Leaves the model holding the parameters
// of the epoch with the lowest validation loss.
TrainReport train(model::GatModel& model, const dataset::WindowSet& train_set, const dataset::WindowSet& val_set,
                  const model::AttentionGraph& graph, const LossConfig& loss_config, const Schedule& schedule,
                  const std::function<void(const EpochRecord&)>& on_epoch = {});

inline constexpr const char* kEpochHeader =
    "epoch,train_loss,val_loss,val_ba,val_precision,val_recall,val_f1,val_accuracy";
std::string epoch_csv(const TrainReport& report);

}  // namespace tailcast::training
