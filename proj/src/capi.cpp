#include "tailcast/tailcast.h"

#include <cstring>
#include <exception>
#include <new>
#include <string>
#include <vector>

#include "error.hpp"
#include "evt.hpp"
#include "metrics.hpp"
#include "model.hpp"
#include "pipeline.hpp"

struct tc_config {
  tailcast::pipeline::RunConfig config;
};

struct tc_result {
  std::string summary;
  std::vector<std::string> warnings;
  std::vector<std::string> outputs;
};

struct tc_model {
  tailcast::model::TrainedModel trained;
};

namespace {

using tailcast::Error;
using tailcast::ErrorKind;

thread_local std::string t_error;
thread_local std::string t_error_kind;

void clear_error() {
  t_error.clear();
  t_error_kind.clear();
}

tc_status fail(tc_status status, std::string kind, std::string message) {
  t_error_kind = std::move(kind);
  t_error = std::move(message);
  return status;
}

// Runs f, mapping exceptions onto status codes and the thread-local error slot.
template <class F>
tc_status guarded(F&& f) {
  clear_error();
  try {
    f();
    return TC_OK;
  } catch (const Error& e) {
    return fail(static_cast<tc_status>(e.category()), std::string(tailcast::to_string(e.kind())), e.what());
  } catch (const std::bad_alloc&) {
    return fail(TC_ERR_INTERNAL, "OutOfMemory", "out of memory");
  } catch (const std::exception& e) {
    return fail(TC_ERR_INTERNAL, "Internal", e.what());
  } catch (...) {
    return fail(TC_ERR_INTERNAL, "Internal", "unknown exception");
  }
}

void require(const void* p, const char* what) {
  if (!p) throw Error(ErrorKind::InvalidConfig, std::string(what) + " must not be NULL");
}

tc_status copy_out(const std::string& s, char* buf, size_t capacity, size_t* needed) {
  if (needed) *needed = s.size() + 1;
  if (capacity == 0) return TC_OK;
  if (!buf) return fail(TC_ERR_CONFIG, "InvalidConfig", "buffer must not be NULL when capacity > 0");
  if (capacity < s.size() + 1) return fail(TC_ERR_CONFIG, "InvalidConfig", "buffer too small");
  std::memcpy(buf, s.c_str(), s.size() + 1);
  return TC_OK;
}

tc_result* to_result(const tailcast::pipeline::CommandResult& r) {
  auto* out = new tc_result;
  out->summary = r.summary;
  out->warnings = r.warnings;
  for (const auto& p : r.outputs) out->outputs.push_back(p.string());
  return out;
}

template <class Run>
tc_status run_command(const tc_config* config, tc_result** out, Run&& run) {
  return guarded([&] {
    require(config, "config");
    require(out, "out");
    *out = to_result(run(config->config));
  });
}

void fill_metrics(const tailcast::metrics::MetricsReport& r, tc_metrics* out) {
  out->tp = r.counts.tp;
  out->tn = r.counts.tn;
  out->fp = r.counts.fp;
  out->fn = r.counts.fn;
  out->accuracy = r.scalars.accuracy;
  out->balanced_accuracy = r.scalars.balanced_accuracy;
  out->precision = r.scalars.precision;
  out->recall = r.scalars.recall;
  out->tnr = r.scalars.tnr;
  out->f1 = r.scalars.f1;
  out->has_auc_roc = r.auc_roc.has_value();
  out->auc_roc = r.auc_roc.value_or(0.0);
  out->has_average_precision = r.average_precision.has_value();
  out->average_precision = r.average_precision.value_or(0.0);
  out->threshold = r.threshold;
}

}  // namespace

extern "C" {

const char* tc_version(void) { return "0.1.0"; }
const char* tc_last_error(void) { return t_error.c_str(); }
const char* tc_last_error_kind(void) { return t_error_kind.c_str(); }

tc_status tc_config_new(tc_config** out) {
  return guarded([&] {
    require(out, "out");
    *out = new tc_config;
  });
}

void tc_config_free(tc_config* config) { delete config; }

tc_status tc_config_load(tc_config* config, const char* path) {
  return guarded([&] {
    require(config, "config");
    require(path, "path");
    tailcast::pipeline::apply_config_file(config->config, path);
  });
}

tc_status tc_config_set(tc_config* config, const char* key, const char* value) {
  return guarded([&] {
    require(config, "config");
    require(key, "key");
    require(value, "value");
    tailcast::pipeline::set_option(config->config, key, value);
  });
}

tc_status tc_config_apply_env(tc_config* config) {
  return guarded([&] {
    require(config, "config");
    tailcast::pipeline::apply_environment(config->config);
  });
}

tc_status tc_config_validate(const tc_config* config) {
  return guarded([&] {
    require(config, "config");
    tailcast::pipeline::require_valid(config->config);
  });
}

tc_status tc_config_get(const tc_config* config, const char* key, char* buf, size_t capacity, size_t* needed) {
  std::string value;
  const tc_status s = guarded([&] {
    require(config, "config");
    require(key, "key");
    value = tailcast::pipeline::get_option(config->config, key);
  });
  return s == TC_OK ? copy_out(value, buf, capacity, needed) : s;
}

tc_status tc_config_text(const tc_config* config, char* buf, size_t capacity, size_t* needed) {
  std::string text;
  const tc_status s = guarded([&] {
    require(config, "config");
    text = tailcast::pipeline::config_text(config->config);
  });
  return s == TC_OK ? copy_out(text, buf, capacity, needed) : s;
}

size_t tc_config_key_count(void) { return tailcast::pipeline::config_keys().size(); }

const char* tc_config_key_name(size_t index) {
  const auto& k = tailcast::pipeline::config_keys();
  return index < k.size() ? k[index].name : nullptr;
}

const char* tc_config_key_help(size_t index) {
  const auto& k = tailcast::pipeline::config_keys();
  return index < k.size() ? k[index].help : nullptr;
}

tc_status tc_run_synth(const tc_config* config, tc_result** out) {
  return run_command(config, out, tailcast::pipeline::run_synth);
}

tc_status tc_run_ingest(const tc_config* config, tc_result** out) {
  return run_command(config, out, tailcast::pipeline::run_ingest);
}

tc_status tc_run_fit_evt(const tc_config* config, tc_result** out) {
  return run_command(config, out, tailcast::pipeline::run_fit_evt);
}

tc_status tc_run_build_graph(const tc_config* config, tc_result** out) {
  return run_command(config, out, tailcast::pipeline::run_build_graph);
}

tc_status tc_run_train(const tc_config* config, tc_epoch_callback callback, void* user_data, tc_result** out) {
  return run_command(config, out, [&](const tailcast::pipeline::RunConfig& c) {
    return tailcast::pipeline::run_train(c, [&](const tailcast::training::EpochRecord& e) {
      if (!callback) return;
      const tc_epoch_info info{e.epoch,        e.train_loss,  e.val_loss,   e.val.balanced_accuracy,
                               e.val.precision, e.val.recall, e.val.f1,     e.val.accuracy};
      callback(user_data, &info);
    });
  });
}

tc_status tc_run_evaluate(const tc_config* config, const char* checkpoint, int threshold_sweep, int per_station,
                          tc_result** out) {
  return run_command(config, out, [&](const tailcast::pipeline::RunConfig& c) {
    require(checkpoint, "checkpoint");
    return tailcast::pipeline::run_evaluate(c, {checkpoint, threshold_sweep != 0, per_station != 0});
  });
}

tc_status tc_run_compare(const tc_config* config, const char* report_a, const char* report_b, tc_result** out) {
  return run_command(config, out, [&](const tailcast::pipeline::RunConfig& c) {
    require(report_a, "report_a");
    require(report_b, "report_b");
    return tailcast::pipeline::run_compare(c, report_a, report_b);
  });
}

const char* tc_result_summary(const tc_result* r) { return r ? r->summary.c_str() : ""; }
size_t tc_result_warning_count(const tc_result* r) { return r ? r->warnings.size() : 0; }
const char* tc_result_warning(const tc_result* r, size_t i) {
  return r && i < r->warnings.size() ? r->warnings[i].c_str() : nullptr;
}
size_t tc_result_output_count(const tc_result* r) { return r ? r->outputs.size() : 0; }
const char* tc_result_output(const tc_result* r, size_t i) {
  return r && i < r->outputs.size() ? r->outputs[i].c_str() : nullptr;
}
void tc_result_free(tc_result* r) { delete r; }

tc_status tc_model_train(const tc_config* config, tc_model** out) {
  return guarded([&] {
    require(config, "config");
    require(out, "out");
    auto outcome = tailcast::pipeline::train_model(config->config);
    *out = new tc_model{std::move(outcome.trained)};
  });
}

tc_status tc_model_load(const char* path, tc_model** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new tc_model{tailcast::model::load_checkpoint(path)};
  });
}

tc_status tc_model_save(const tc_model* model, const char* path) {
  return guarded([&] {
    require(model, "model");
    require(path, "path");
    tailcast::model::save_checkpoint(model->trained, path);
  });
}

void tc_model_free(tc_model* model) { delete model; }

size_t tc_model_feature_count(const tc_model* model) {
  return model ? model->trained.model.config().n_features : 0;
}

size_t tc_model_station_count(const tc_model* model) { return model ? model->trained.station_ids.size() : 0; }

tc_status tc_model_evaluate(const tc_model* model, const tc_config* config, tc_metrics* out) {
  return guarded([&] {
    require(model, "model");
    require(config, "config");
    require(out, "out");
    fill_metrics(tailcast::pipeline::evaluate_model(model->trained, config->config), out);
  });
}

tc_status tc_metrics_compute(const double* labels, const double* scores, size_t n, double threshold,
                             tc_metrics* out) {
  return guarded([&] {
    require(out, "out");
    if (n > 0) {
      require(labels, "labels");
      require(scores, "scores");
    }
    fill_metrics(tailcast::metrics::evaluate({labels, n}, {scores, n}, threshold), out);
  });
}

tc_status tc_gpd_cdf(double y, double xi, double sigma, double* out) {
  return guarded([&] {
    require(out, "out");
    *out = tailcast::evt::gpd_cdf(y, xi, sigma);
  });
}

tc_status tc_gpd_fit(const double* exceedances, size_t n, size_t min_exceedances, double* xi, double* sigma) {
  return guarded([&] {
    require(xi, "xi");
    require(sigma, "sigma");
    if (n > 0) require(exceedances, "exceedances");
    tailcast::evt::FitOptions options;
    options.min_exceedances = min_exceedances;
    const auto fit = tailcast::evt::fit_gpd_mle({exceedances, n}, options);
    *xi = fit.xi;
    *sigma = fit.sigma;
  });
}

}  // extern "C"
