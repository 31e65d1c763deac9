#include "training.hpp"

#include <malloc.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "csv.hpp"
#include "error.hpp"

namespace tailcast::training {

using ad::Shape;
using ad::Tensor;
using ad::Var;

const char* to_string(LossKind k) noexcept { return k == LossKind::Bce ? "bce" : "weighted_f1"; }

std::optional<LossKind> parse_loss_kind(std::string_view s) {
  if (s == "weighted_f1") return LossKind::WeightedF1;
  if (s == "bce") return LossKind::Bce;
  return std::nullopt;
}

const char* to_string(StopReason r) noexcept { return r == StopReason::EarlyStopping ? "early_stopping" : "max_epochs"; }

std::string validate(const LossConfig& c, bool require_heavy_weights) {
  if (!std::isfinite(c.beta) || c.beta < 0.0) return "loss beta must be finite and >= 0";
  if (!(c.eps > 0.0)) return "loss eps must be > 0";
  for (double w : c.station_weights) {
    if (!std::isfinite(w) || w <= 0.0) return "station weights must be finite and > 0";
    if (require_heavy_weights && w < 1.0) return "station weights must be >= 1";
  }
  return {};
}

namespace {

// Batched attention tensors are megabytes each. Keeping freed blocks in the heap instead of
// returning them to the OS avoids re-faulting every page on each minibatch.
void keep_large_blocks() {
#ifdef M_MMAP_THRESHOLD
  static const bool once = [] {
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    return true;
  }();
  (void)once;
#endif
}

std::vector<double> unit_mean_weights(std::span<const double> w, std::size_t n) {
  if (w.empty()) return std::vector<double>(n, 1.0);
  if (w.size() != n)
    throw Error(ErrorKind::ShapeMismatch,
                std::to_string(w.size()) + " station weights for " + std::to_string(n) + " stations");
  const double m = std::accumulate(w.begin(), w.end(), 0.0) / static_cast<double>(n);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = w[i] / m;
  return out;
}

}  // namespace

WeightedCounts weighted_counts(std::span<const double> y, std::span<const double> y_hat, std::span<const double> w) {
  if (y.size() != y_hat.size() || w.empty() || y.size() % w.size() != 0)
    throw Error(ErrorKind::ShapeMismatch, "targets, predictions and station weights do not align");
  const std::size_t n = w.size();
  WeightedCounts c;
  for (std::size_t k = 0; k < y.size(); ++k) {
    const double wi = w[k % n];
    c.tp += wi * y[k] * y_hat[k];
    c.fp += wi * (1.0 - y[k]) * y_hat[k];
    c.fn += wi * y[k] * (1.0 - y_hat[k]);
  }
  return c;
}

double weighted_f1_loss(const WeightedCounts& c, double beta, double eps) {
  const double b2 = beta * beta;
  return 1.0 - (1.0 + b2) * c.tp / ((1.0 + b2) * c.tp + b2 * c.fn + c.fp + eps);
}

double weighted_f1_loss(std::span<const double> y, std::span<const double> y_hat, std::span<const double> w,
                        double beta, double eps) {
  const auto wn = unit_mean_weights(w, w.size());
  return weighted_f1_loss(weighted_counts(y, y_hat, wn), beta, eps);
}

double bce_loss(std::span<const double> y, std::span<const double> y_hat, double eps) {
  if (y.size() != y_hat.size() || y.empty()) throw Error(ErrorKind::ShapeMismatch, "bce inputs must align");
  double s = 0.0;
  for (std::size_t k = 0; k < y.size(); ++k) {
    const double p = std::clamp(y_hat[k], eps, 1.0 - eps);
    s -= y[k] * std::log(p) + (1.0 - y[k]) * std::log(1.0 - p);
  }
  return s / static_cast<double>(y.size());
}

Var weighted_f1_loss(const Var& probs, const Tensor& y, std::span<const double> w, double beta, double eps) {
  const Shape& s = probs.shape();
  if (s.size() != 3 || y.shape() != s) throw Error(ErrorKind::ShapeMismatch, "loss expects matching [B, N, C] tensors");
  const std::size_t n = s[1], c = s[2];
  const auto wn = unit_mean_weights(w, n);
  Tensor wt(Shape{n, c});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t h = 0; h < c; ++h) wt[i * c + h] = wn[i];
  Tensor yw = y;
  double pos = 0.0;
  for (std::size_t k = 0; k < yw.size(); ++k) {
    yw[k] *= wt[k % (n * c)];
    pos += yw[k];
  }
  // (1+b2) tp + b2 fn + fp = b2 * sum(w y) + sum(w p), so only tp and sum(w p) depend on p.
  const double b2 = beta * beta;
  Var tp = ad::sum(ad::mul(probs, Var::constant(std::move(yw))));
  Var pred = ad::sum(ad::mul(probs, Var::constant(std::move(wt))));
  Var denom = ad::add_scalar(pred, b2 * pos + eps);
  return ad::rsub_scalar(1.0, ad::div(ad::scale(tp, 1.0 + b2), denom));
}

Var bce_loss(const Var& probs, const Tensor& y, double eps) {
  if (y.shape() != probs.shape()) throw Error(ErrorKind::ShapeMismatch, "bce expects matching tensors");
  Tensor not_y = y;
  for (auto& v : not_y.values()) v = 1.0 - v;
  Var p = ad::clamp(probs, eps, 1.0 - eps);
  Var ll = ad::add(ad::mul(Var::constant(y), ad::log(p)),
                   ad::mul(Var::constant(std::move(not_y)), ad::log(ad::rsub_scalar(1.0, p))));
  return ad::scale(ad::mean(ll), -1.0);
}

Var loss(const LossConfig& c, const Var& probs, const Tensor& y) {
  if (c.kind == LossKind::Bce) return bce_loss(probs, y, c.eps);
  return weighted_f1_loss(probs, y, c.station_weights, c.beta, c.eps);
}

double loss_value(const LossConfig& c, std::span<const double> y, std::span<const double> y_hat,
                  std::size_t n_stations) {
  if (c.kind == LossKind::Bce) return bce_loss(y, y_hat, c.eps);
  const auto wn = unit_mean_weights(c.station_weights, n_stations);
  return weighted_f1_loss(weighted_counts(y, y_hat, wn), c.beta, c.eps);
}

AdamState make_adam(const std::vector<Var>& params, const AdamConfig& config) {
  AdamState s;
  s.config = config;
  for (const auto& p : params) {
    s.m.emplace_back(p.shape(), 0.0);
    s.v.emplace_back(p.shape(), 0.0);
  }
  return s;
}

void adam_step(const std::vector<Var>& params, AdamState& s) {
  if (params.size() != s.m.size()) throw Error(ErrorKind::ShapeMismatch, "optimizer state does not match parameters");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor& g = params[i].grad();
    if (g.shape() != s.m[i].shape()) throw Error(ErrorKind::ShapeMismatch, "moment buffer shape differs from parameter");
    for (double v : g.values())
      if (!std::isfinite(v))
        throw Error(ErrorKind::NonFiniteGradient, "parameter " + std::to_string(i) + " at step " +
                                                      std::to_string(s.step + 1));
  }
  ++s.step;
  const auto& c = s.config;
  const double t = static_cast<double>(s.step);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor& g = params[i].grad();
    Tensor& p = Var(params[i]).mutable_value();
    Tensor& m = s.m[i];
    Tensor& v = s.v[i];
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * g[k];
      v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * g[k] * g[k];
      p[k] -= c.learning_rate * (m[k] / bc1) / (std::sqrt(v[k] / bc2) + c.eps);
    }
  }
}

Batch make_batch(const dataset::WindowSet& ws, std::span<const std::size_t> indices) {
  const auto& p = *ws.panel;
  const std::size_t n = p.n_stations, f = p.n_features, b = indices.size();
  const std::size_t row = ws.c_in * f;
  Batch out{Tensor(Shape{b, n, row}), Tensor(Shape{b, n, ws.c_out})};
  std::vector<double> x(ws.c_in * n * f), y(ws.c_out * n);
  for (std::size_t k = 0; k < b; ++k) {
    ws.fill(indices[k], x, y);
    model::window_to_node_rows(x, ws.c_in, n, f, out.x.values().subspan(k * n * row, n * row));
    for (std::size_t h = 0; h < ws.c_out; ++h)
      for (std::size_t s = 0; s < n; ++s) out.y[(k * n + s) * ws.c_out + h] = y[h * n + s];
  }
  return out;
}

Predictions predict(const model::GatModel& model, const dataset::WindowSet& ws, const model::AttentionGraph& graph,
                    std::size_t batch_size) {
  Predictions out;
  if (ws.empty()) return out;
  keep_large_blocks();
  const std::size_t n = ws.panel->n_stations, c = ws.c_out;
  out.y.resize(ws.size() * c * n);
  out.p.resize(ws.size() * c * n);
  std::vector<std::size_t> idx;
  ad::NoGradGuard no_grad;
  for (std::size_t start = 0; start < ws.size(); start += batch_size) {
    const std::size_t end = std::min(ws.size(), start + batch_size);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    Batch b = make_batch(ws, idx);
    const Tensor probs = model.forward(Var::constant(std::move(b.x)), graph).value();
    for (std::size_t k = 0; k < idx.size(); ++k)
      for (std::size_t s = 0; s < n; ++s)
        for (std::size_t h = 0; h < c; ++h) {
          const std::size_t src = (k * n + s) * c + h;
          const std::size_t dst = ((start + k) * c + h) * n + s;
          out.p[dst] = probs[src];
          out.y[dst] = b.y[src];
        }
  }
  return out;
}

TrainReport train(model::GatModel& model, const dataset::WindowSet& train_set, const dataset::WindowSet& val_set,
                  const model::AttentionGraph& graph, const LossConfig& loss_config, const Schedule& schedule,
                  const std::function<void(const EpochRecord&)>& on_epoch) {
  if (train_set.empty()) throw Error(ErrorKind::EmptyDataset, "no training windows");
  if (val_set.empty()) throw Error(ErrorKind::EmptyDataset, "no validation windows");
  if (schedule.batch_size == 0 || schedule.max_epochs == 0)
    throw Error(ErrorKind::InvalidConfig, "batch size and max epochs must be >= 1");
  if (auto why = validate(loss_config, false); !why.empty()) throw Error(ErrorKind::InvalidConfig, why);

  keep_large_blocks();
  const auto params = model.parameters();
  AdamConfig adam_config;
  adam_config.learning_rate = schedule.learning_rate;
  AdamState adam = make_adam(params, adam_config);
  std::mt19937_64 rng(schedule.seed);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t n = train_set.panel->n_stations;

  TrainReport report;
  std::vector<Tensor> best_params;
  double best = std::numeric_limits<double>::infinity();
  double reference = best;
  std::size_t waited = 0;

  for (std::size_t epoch = 1; epoch <= schedule.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += schedule.batch_size) {
      const std::size_t end = std::min(order.size(), start + schedule.batch_size);
      Batch b = make_batch(train_set, std::span(order).subspan(start, end - start));
      for (const auto& p : params) Var(p).zero_grad();
      Var probs = model.forward(Var::constant(std::move(b.x)), graph);
      Var l = loss(loss_config, probs, b.y);
      const double value = l.value().item();
      if (!std::isfinite(value))
        throw Error(ErrorKind::NonFiniteLoss, "epoch " + std::to_string(epoch) + ", batch " + std::to_string(batches));
      ad::backward(l);
      adam_step(params, adam);
      loss_sum += value;
      ++batches;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(batches);
    const Predictions pred = predict(model, val_set, graph, schedule.batch_size);
    rec.val_loss = loss_value(loss_config, pred.y, pred.p, n);
    if (!std::isfinite(rec.val_loss))
      throw Error(ErrorKind::NonFiniteLoss, "validation loss at epoch " + std::to_string(epoch));
    rec.val = metrics::scalar_metrics(metrics::confusion(pred.y, pred.p));
    report.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);

    if (rec.val_loss < best) {
      best = rec.val_loss;
      report.best_epoch = epoch;
      best_params.clear();
      for (const auto& p : params) best_params.push_back(p.value());
    }
    if (rec.val_loss < reference - schedule.min_delta) {
      reference = rec.val_loss;
      waited = 0;
    } else if (++waited >= schedule.patience) {
      report.stop_reason = StopReason::EarlyStopping;
      break;
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) Var(params[i]).mutable_value() = best_params[i];
  report.best_val_loss = best;
  return report;
}

std::string epoch_csv(const TrainReport& r) {
  std::ostringstream os;
  os << kEpochHeader << '\n';
  for (const auto& e : r.epochs)
    os << e.epoch << ',' << csv::format_double(e.train_loss) << ',' << csv::format_double(e.val_loss) << ','
       << csv::format_double(e.val.balanced_accuracy) << ',' << csv::format_double(e.val.precision) << ','
       << csv::format_double(e.val.recall) << ',' << csv::format_double(e.val.f1) << ','
       << csv::format_double(e.val.accuracy) << '\n';
  return os.str();
}

}  // namespace tailcast::training
