// Command-line front end. Talks to the library only through the C interface.
#include <tailcast/tailcast.h>

#include <CLI11.hpp>
#include <cstdio>
#include <deque>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

namespace {

struct Flag {
  const char* name;  // CLI flag without leading dashes
  const char* key;   // config key it sets
  const char* help;
  bool is_switch = false;
};

struct Bound {
  std::string key;
  std::string value;
  CLI::Option* option = nullptr;
};

struct Command {
  CLI::App* app = nullptr;
  std::deque<Bound> bound;
};

using ConfigPtr = std::unique_ptr<tc_config, decltype(&tc_config_free)>;
using ResultPtr = std::unique_ptr<tc_result, decltype(&tc_result_free)>;

int report_failure(tc_status s) {
  std::cerr << "error: " << tc_last_error() << '\n';
  return static_cast<int>(s);
}

void bind(Command& cmd, const std::vector<Flag>& flags) {
  for (const auto& f : flags) {
    auto& b = cmd.bound.emplace_back();
    b.key = f.key;
    const std::string name = std::string("--") + f.name;
    if (f.is_switch) {
      b.option = cmd.app->add_flag_callback(name, [&b] { b.value = "1"; }, f.help);
    } else {
      b.option = cmd.app->add_option(name, b.value, f.help);
    }
  }
}

const std::vector<Flag> kCommon = {
    {"data", "data_dir", "input data directory"},
    {"out", "out_dir", "output directory (TAILCAST_OUT overrides the config file)"},
    {"seed", "seed", "root random seed"},
};
const std::vector<Flag> kSplit = {
    {"train-end", "train_end", "last training date (YYYY-MM-DD)"},
    {"val-start", "val_start", "first validation date (YYYY-MM-DD)"},
    {"train-years", "train_years", "training years when split dates are unset"},
    {"max-gap-days", "max_gap_days", "longest gap bridged by interpolation"},
};
const std::vector<Flag> kModel = {
    {"mode", "mode", "di or baseline"},
    {"features", "features", "feature set; must match mode"},
    {"c-in", "c_in", "input history length in days"},
    {"c-out", "c_out", "forecast horizon in days"},
    {"layers", "n_layers", "graph attention layers"},
    {"hidden-dim", "hidden_dim", "hidden width per head"},
    {"heads", "n_heads", "attention heads"},
    {"attention-bias", "attention_bias", "log_bias or mask_only"},
    {"quantile", "evt_quantile", "GPD threshold quantile"},
    {"min-exceedances", "min_exceedances", "minimum exceedances per GPD fit"},
    {"sparsify", "sparsify_threshold", "adjacency sparsification threshold"},
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tailcast: distribution-informed graph attention forecasting of heatwaves"};
  app.require_subcommand(0, 1);
  std::string config_path;
  std::vector<std::string> overrides;
  bool list_keys = false;
  app.add_option("-c,--config", config_path, "flat key = value config file");
  app.add_option("--set", overrides, "config override key=value (repeatable)");
  app.add_flag("--list-keys", list_keys, "print every config key and exit");

  std::deque<Command> commands;
  auto add = [&](const char* name, const char* help, std::vector<std::vector<Flag>> groups) -> Command& {
    auto& cmd = commands.emplace_back();
    cmd.app = app.add_subcommand(name, help);
    for (const auto& g : groups) bind(cmd, g);
    return cmd;
  };

  auto& synth = add("synth", "generate a synthetic station dataset",
                    {{{"out", "out_dir", "output directory"},
                      {"seed", "seed", "root random seed"},
                      {"stations", "stations", "number of stations"},
                      {"years", "years", "record length in years"},
                      {"start-year", "start_year", "first calendar year"},
                      {"exceed-prob", "exceed_prob", "fraction of summer days inside an excursion"},
                      {"gpd-xi", "gpd_xi", "excursion GPD shape"},
                      {"gpd-sigma", "gpd_sigma", "excursion GPD scale"}}});
  auto& ingest = add("ingest", "aggregate and impute raw station files into daily data",
                     {kCommon, {{"format", "ingest_format", "hourly or daily"},
                                {"max-gap-days", "max_gap_days", "longest gap bridged by interpolation"}}});
  auto& fit_evt = add("fit-evt", "fit per-station GPD descriptors and heatwave labels",
                      {kCommon, kSplit,
                       {{"quantile", "evt_quantile", "GPD threshold quantile"},
                        {"min-exceedances", "min_exceedances", "minimum exceedances per fit"}}});
  auto& build_graph = add("build-graph", "build the weighted station adjacency",
                          {kCommon, kSplit,
                           {{"mode", "mode", "di or baseline"},
                            {"quantile", "evt_quantile", "GPD threshold quantile"},
                            {"min-exceedances", "min_exceedances", "minimum exceedances per fit"},
                            {"sparsify", "sparsify_threshold", "adjacency sparsification threshold"}}});
  auto& train = add("train", "train a model and write checkpoint, epoch log and manifest",
                    {kCommon, kSplit, kModel,
                     {{"loss", "loss", "weighted_f1 or bce"},
                      {"beta", "loss_beta", "F-beta trade-off"},
                      {"lr", "learning_rate", "Adam learning rate"},
                      {"batch-size", "batch_size", "windows per batch"},
                      {"epochs", "max_epochs", "maximum epochs"},
                      {"patience", "patience", "early stopping patience"},
                      {"min-delta", "min_delta", "minimum validation improvement"}}});
  auto& evaluate = add("evaluate", "evaluate a checkpoint and export metrics and curves",
                       {kCommon,
                        {{"mode", "mode", "expected mode; checked against the checkpoint"},
                         {"features", "features", "expected feature set; checked against the checkpoint"},
                         {"threshold", "threshold", "classification threshold"},
                         {"split", "eval_split", "val or train"},
                         {"max-gap-days", "max_gap_days", "longest gap bridged by interpolation"}}});
  std::string checkpoint;
  bool sweep = false, per_station = false;
  evaluate.app->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  evaluate.app->add_flag("--threshold-sweep", sweep, "also write per-threshold metrics");
  evaluate.app->add_flag("--per-station", per_station, "add a per-station breakdown to the report");
  auto& compare = add("compare", "tabulate metric deltas between two reports", {{{"out", "out_dir", "output directory"}}});
  std::string report_a, report_b;
  compare.app->add_option("report_a", report_a, "baseline metrics.json")->required();
  compare.app->add_option("report_b", report_b, "candidate metrics.json")->required();

  CLI11_PARSE(app, argc, argv);

  if (list_keys) {
    for (size_t i = 0; i < tc_config_key_count(); ++i)
      std::printf("%-22s %s\n", tc_config_key_name(i), tc_config_key_help(i));
    return 0;
  }
  if (app.get_subcommands().empty()) {
    std::cout << app.help();
    return 2;
  }

  tc_config* raw = nullptr;
  if (tc_status s = tc_config_new(&raw); s != TC_OK) return report_failure(s);
  ConfigPtr config(raw, tc_config_free);
  if (!config_path.empty())
    if (tc_status s = tc_config_load(config.get(), config_path.c_str()); s != TC_OK) return report_failure(s);
  if (tc_status s = tc_config_apply_env(config.get()); s != TC_OK) return report_failure(s);
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      std::cerr << "error: --set expects key=value, got '" << kv << "'\n";
      return 2;
    }
    if (tc_status s = tc_config_set(config.get(), kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str()); s != TC_OK)
      return report_failure(s);
  }

  Command* active = nullptr;
  for (auto& c : commands)
    if (c.app->parsed()) active = &c;
  for (const auto& b : active->bound)
    if (b.option->count() > 0)
      if (tc_status s = tc_config_set(config.get(), b.key.c_str(), b.value.c_str()); s != TC_OK)
        return report_failure(s);

  tc_result* result_raw = nullptr;
  tc_status status = TC_OK;
  if (active == &synth) {
    status = tc_run_synth(config.get(), &result_raw);
  } else if (active == &ingest) {
    status = tc_run_ingest(config.get(), &result_raw);
  } else if (active == &fit_evt) {
    status = tc_run_fit_evt(config.get(), &result_raw);
  } else if (active == &build_graph) {
    status = tc_run_build_graph(config.get(), &result_raw);
  } else if (active == &train) {
    auto progress = [](void*, const tc_epoch_info* e) {
      std::fprintf(stderr, "epoch %3zu  train_loss %.5f  val_loss %.5f  val_ba %.4f  val_recall %.4f  val_f1 %.4f\n",
                   e->epoch, e->train_loss, e->val_loss, e->val_balanced_accuracy, e->val_recall, e->val_f1);
    };
    status = tc_run_train(config.get(), progress, nullptr, &result_raw);
  } else if (active == &evaluate) {
    status = tc_run_evaluate(config.get(), checkpoint.c_str(), sweep, per_station, &result_raw);
  } else if (active == &compare) {
    status = tc_run_compare(config.get(), report_a.c_str(), report_b.c_str(), &result_raw);
  }
  if (status != TC_OK) return report_failure(status);

  ResultPtr result(result_raw, tc_result_free);
  for (size_t i = 0; i < tc_result_warning_count(result.get()); ++i)
    std::cerr << "warning: " << tc_result_warning(result.get(), i) << '\n';
  std::cout << tc_result_summary(result.get()) << '\n';
  for (size_t i = 0; i < tc_result_output_count(result.get()); ++i)
    if (i < 8) std::cout << "  " << tc_result_output(result.get(), i) << '\n';
  if (tc_result_output_count(result.get()) > 8)
    std::cout << "  ... " << tc_result_output_count(result.get()) - 8 << " more files\n";
  return 0;
}
