#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "dataset.hpp"
#include "evt.hpp"
#include "graph.hpp"
#include "ingest.hpp"
#include "metrics.hpp"
#include "model.hpp"
#include "synth.hpp"
#include "training.hpp"

namespace tailcast::pipeline {

// Every setting of a run. Text form is flat `key = value` lines; see config_keys().
struct RunConfig {
  std::filesystem::path data_dir = "data";
  std::filesystem::path out_dir = "out";
  dataset::FeatureMode mode = dataset::FeatureMode::Di;
  std::optional<dataset::FeatureMode> features;  // must agree with mode when given
  std::optional<training::LossKind> loss;        // default: weighted_f1 for di, bce for baseline
  std::size_t c_in = 10;
  std::size_t c_out = 3;
  std::optional<Date> train_end;  // default: end of the train_years-th calendar year
  std::optional<Date> val_start;  // default: day after train_end
  int train_years = 13;
  double loss_beta = 1.0;
  std::size_t n_layers = 2;
  std::size_t hidden_dim = 64;
  std::size_t n_heads = 4;
  model::AttentionBias attention_bias = model::AttentionBias::LogBias;
  double learning_rate = 1e-3;
  std::size_t batch_size = 64;
  std::size_t max_epochs = 100;
  std::size_t patience = 10;
  double min_delta = 1e-4;
  std::uint64_t seed = 7;
  double evt_quantile = evt::kDefaultQuantile;
  std::size_t min_exceedances = evt::kDefaultMinExceedances;
  std::optional<double> sparsify_threshold;
  int max_gap_days = 3;
  std::string ingest_format = "hourly";  // hourly | daily
  double threshold = metrics::kDefaultThreshold;
  std::string eval_split = "val";  // val | train
  synth::SynthConfig synth;        // synth.seed mirrors seed
  std::set<std::string> explicit_keys;  // keys set from a file, flag or environment
};

struct ConfigKey {
  const char* name;
  const char* help;
};
const std::vector<ConfigKey>& config_keys();

// Throws InvalidConfig for unknown keys or unparsable values.
void set_option(RunConfig& config, const std::string& key, const std::string& value);
// Parses `key = value` lines; '#' starts a comment.
void apply_config_text(RunConfig& config, const std::string& text);
void apply_config_file(RunConfig& config, const std::filesystem::path& path);
// TAILCAST_OUT overrides out_dir when set.
void apply_environment(RunConfig& config);
std::string get_option(const RunConfig& config, const std::string& key);
// Canonical text form, one line per key in config_keys() order. Reloading it reproduces the config.
std::string config_text(const RunConfig& config);

// Empty when valid.
std::string validate(const RunConfig& config);
void require_valid(const RunConfig& config);

training::LossKind effective_loss(const RunConfig& config);
model::ModelConfig model_config(const RunConfig& config);
training::Schedule schedule(const RunConfig& config);
dataset::SplitSpec resolve_split(const RunConfig& config, const ingest::StationData& data);

// Shared preparation for training and evaluation.
struct Prepared {
  std::vector<dataset::PreparedStation> stations;
  dataset::SplitSpec split;
  dataset::Panel panel;
  dataset::NormStats norm;
  graph::GraphSpec graph;
  dataset::WindowSplit windows;
  std::vector<std::string> warnings;
};

// Imputes each station with the configured linear policy.
ingest::StationData impute_all(const ingest::StationData& data, int max_gap_days);
// Summer training-period t_max per station on the panel calendar, NaN where missing.
std::vector<std::vector<double>> summer_training_series(const ingest::StationData& data, dataset::SplitSpec split);
std::vector<double> summer_training_t_max(const ingest::StationSeries& series, Date train_end);

// Fits thresholds, descriptors, normalisation and graph from the training period.
Prepared prepare(const RunConfig& config, const ingest::StationData& imputed);
// Rebuilds the panel and windows using statistics stored in a checkpoint.
Prepared prepare_from_checkpoint(const model::TrainedModel& trained, const ingest::StationData& imputed);

// --- commands ---------------------------------------------------------------------------

struct CommandResult {
  std::vector<std::filesystem::path> outputs;
  std::vector<std::string> warnings;
  std::string summary;
};

CommandResult run_synth(const RunConfig& config);
CommandResult run_ingest(const RunConfig& config);
CommandResult run_fit_evt(const RunConfig& config);
CommandResult run_build_graph(const RunConfig& config);

struct TrainOutcome {
  CommandResult result;
  model::TrainedModel trained;
  training::TrainReport report;
  std::string dataset_manifest;  // JSON: split dates, feature order, normalization stats
};
TrainOutcome train_model(const RunConfig& config, const std::function<void(const training::EpochRecord&)>& on_epoch = {});
CommandResult run_train(const RunConfig& config, const std::function<void(const training::EpochRecord&)>& on_epoch = {});

struct EvaluateOptions {
  std::filesystem::path checkpoint;
  bool threshold_sweep = false;
  bool per_station = false;
};
metrics::MetricsReport evaluate_model(const model::TrainedModel& trained, const RunConfig& config,
                                      training::Predictions* predictions = nullptr);
CommandResult run_evaluate(const RunConfig& config, const EvaluateOptions& options);

CommandResult run_compare(const RunConfig& config, const std::filesystem::path& report_a,
                          const std::filesystem::path& report_b);

}  // namespace tailcast::pipeline
