#include "pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <json.hpp>
#include <limits>
#include <sstream>

#include "csv.hpp"
#include "error.hpp"

namespace tailcast::pipeline {

namespace {

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected) {
  throw Error(ErrorKind::InvalidConfig, key + ": cannot parse '" + value + "' as " + expected);
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <class T>
T parse_integer(const std::string& key, const std::string& v) {
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) bad_value(key, v, "an integer");
  return out;
}

double parse_real(const std::string& key, const std::string& v) {
  const auto d = csv::parse_double(v);
  if (!d) bad_value(key, v, "a finite number");
  return *d;
}

Date parse_date(const std::string& key, const std::string& v) {
  const auto d = Date::parse(v);
  if (!d) bad_value(key, v, "a YYYY-MM-DD date");
  return *d;
}

bool is_none(const std::string& v) { return v.empty() || v == "none"; }

dataset::FeatureMode parse_mode(const std::string& key, const std::string& v) {
  const auto m = dataset::parse_feature_mode(v);
  if (!m) bad_value(key, v, "di or baseline");
  return *m;
}

std::string fmt(double v) { return csv::format_double(v); }

struct Option {
  ConfigKey key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define TC_SIZE(field)                                                                      \
  [](RunConfig& c, const std::string& v) { c.field = parse_integer<std::size_t>(#field, v); }, \
      [](const RunConfig& c) { return std::to_string(c.field); }
#define TC_REAL(name, field)                                                  \
  [](RunConfig& c, const std::string& v) { c.field = parse_real(name, v); }, \
      [](const RunConfig& c) { return fmt(c.field); }

const std::vector<Option>& options() {
  static const std::vector<Option> table = {
      {{"data_dir", "input data directory (stations.csv + <station_id>.csv)"},
       [](RunConfig& c, const std::string& v) { c.data_dir = v; },
       [](const RunConfig& c) { return c.data_dir.string(); }},
      {{"out_dir", "output directory; TAILCAST_OUT overrides it"},
       [](RunConfig& c, const std::string& v) { c.out_dir = v; },
       [](const RunConfig& c) { return c.out_dir.string(); }},
      {{"mode", "feature and graph mode: di or baseline"},
       [](RunConfig& c, const std::string& v) { c.mode = parse_mode("mode", v); },
       [](const RunConfig& c) { return std::string(dataset::to_string(c.mode)); }},
      {{"features", "feature set (di or baseline); must agree with mode"},
       [](RunConfig& c, const std::string& v) {
         c.features = is_none(v) ? std::nullopt : std::optional(parse_mode("features", v));
       },
       [](const RunConfig& c) { return c.features ? std::string(dataset::to_string(*c.features)) : "none"; }},
      {{"loss", "weighted_f1 or bce; default weighted_f1 for di, bce for baseline"},
       [](RunConfig& c, const std::string& v) {
         if (is_none(v)) {
           c.loss.reset();
           return;
         }
         const auto k = training::parse_loss_kind(v);
         if (!k) bad_value("loss", v, "weighted_f1 or bce");
         c.loss = *k;
       },
       [](const RunConfig& c) { return c.loss ? std::string(training::to_string(*c.loss)) : "none"; }},
      {{"c_in", "input history length in days"}, TC_SIZE(c_in)},
      {{"c_out", "forecast horizon in days"}, TC_SIZE(c_out)},
      {{"train_end", "last training date (YYYY-MM-DD)"},
       [](RunConfig& c, const std::string& v) {
         c.train_end = is_none(v) ? std::nullopt : std::optional(parse_date("train_end", v));
       },
       [](const RunConfig& c) { return c.train_end ? c.train_end->iso() : "none"; }},
      {{"val_start", "first validation date (YYYY-MM-DD)"},
       [](RunConfig& c, const std::string& v) {
         c.val_start = is_none(v) ? std::nullopt : std::optional(parse_date("val_start", v));
       },
       [](const RunConfig& c) { return c.val_start ? c.val_start->iso() : "none"; }},
      {{"train_years", "calendar years used for training when split dates are unset"},
       [](RunConfig& c, const std::string& v) { c.train_years = parse_integer<int>("train_years", v); },
       [](const RunConfig& c) { return std::to_string(c.train_years); }},
      {{"loss_beta", "F-beta trade-off of the weighted F1 loss"}, TC_REAL("loss_beta", loss_beta)},
      {{"n_layers", "graph attention layers"}, TC_SIZE(n_layers)},
      {{"hidden_dim", "hidden width per attention head"}, TC_SIZE(hidden_dim)},
      {{"n_heads", "attention heads per layer"}, TC_SIZE(n_heads)},
      {{"attention_bias", "log_bias or mask_only"},
       [](RunConfig& c, const std::string& v) {
         const auto b = model::parse_attention_bias(v);
         if (!b) bad_value("attention_bias", v, "log_bias or mask_only");
         c.attention_bias = *b;
       },
       [](const RunConfig& c) { return std::string(model::to_string(c.attention_bias)); }},
      {{"learning_rate", "Adam learning rate"}, TC_REAL("learning_rate", learning_rate)},
      {{"batch_size", "windows per minibatch"}, TC_SIZE(batch_size)},
      {{"max_epochs", "upper bound on training epochs"}, TC_SIZE(max_epochs)},
      {{"patience", "epochs without improvement before stopping"}, TC_SIZE(patience)},
      {{"min_delta", "minimum validation loss improvement"}, TC_REAL("min_delta", min_delta)},
      {{"seed", "root seed for every random draw"},
       [](RunConfig& c, const std::string& v) { c.seed = parse_integer<std::uint64_t>("seed", v); },
       [](const RunConfig& c) { return std::to_string(c.seed); }},
      {{"evt_quantile", "GPD threshold quantile"}, TC_REAL("evt_quantile", evt_quantile)},
      {{"min_exceedances", "minimum exceedances for a GPD fit"}, TC_SIZE(min_exceedances)},
      {{"sparsify_threshold", "drop off-diagonal adjacency entries below this value"},
       [](RunConfig& c, const std::string& v) {
         c.sparsify_threshold = is_none(v) ? std::nullopt : std::optional(parse_real("sparsify_threshold", v));
       },
       [](const RunConfig& c) { return c.sparsify_threshold ? fmt(*c.sparsify_threshold) : "none"; }},
      {{"max_gap_days", "longest gap bridged by linear interpolation"},
       [](RunConfig& c, const std::string& v) { c.max_gap_days = parse_integer<int>("max_gap_days", v); },
       [](const RunConfig& c) { return std::to_string(c.max_gap_days); }},
      {{"ingest_format", "raw input of the ingest command: hourly or daily"},
       [](RunConfig& c, const std::string& v) { c.ingest_format = v; },
       [](const RunConfig& c) { return c.ingest_format; }},
      {{"threshold", "classification threshold for evaluation"}, TC_REAL("threshold", threshold)},
      {{"eval_split", "windows to evaluate: val or train"},
       [](RunConfig& c, const std::string& v) { c.eval_split = v; },
       [](const RunConfig& c) { return c.eval_split; }},
      {{"stations", "synthetic station count"},
       [](RunConfig& c, const std::string& v) { c.synth.n_stations = parse_integer<int>("stations", v); },
       [](const RunConfig& c) { return std::to_string(c.synth.n_stations); }},
      {{"years", "synthetic record length in years"},
       [](RunConfig& c, const std::string& v) { c.synth.n_years = parse_integer<int>("years", v); },
       [](const RunConfig& c) { return std::to_string(c.synth.n_years); }},
      {{"start_year", "first synthetic calendar year"},
       [](RunConfig& c, const std::string& v) { c.synth.start_year = parse_integer<int>("start_year", v); },
       [](const RunConfig& c) { return std::to_string(c.synth.start_year); }},
      {{"seasonal_amp", "synthetic seasonal amplitude (degC)"}, TC_REAL("seasonal_amp", synth.seasonal_amp)},
      {{"ar1_coeff", "synthetic anomaly persistence"}, TC_REAL("ar1_coeff", synth.ar1_coeff)},
      {{"noise_sd", "synthetic innovation sd (degC)"}, TC_REAL("noise_sd", synth.noise_sd)},
      {{"gpd_xi", "synthetic excursion GPD shape"}, TC_REAL("gpd_xi", synth.gpd_xi)},
      {{"gpd_sigma", "synthetic excursion GPD scale (degC)"}, TC_REAL("gpd_sigma", synth.gpd_sigma)},
      {{"exceed_prob", "synthetic fraction of summer days in an excursion"}, TC_REAL("exceed_prob", synth.exceed_prob)},
      {{"spatial_length_scale", "synthetic correlation length (km)"},
       TC_REAL("spatial_length_scale", synth.spatial_length_scale)},
      {{"event_persistence", "synthetic excursion process persistence"},
       TC_REAL("event_persistence", synth.event_persistence)},
      {{"amplitude_persistence", "synthetic excursion size persistence"},
       TC_REAL("amplitude_persistence", synth.amplitude_persistence)},
  };
  return table;
}

#undef TC_SIZE
#undef TC_REAL

const Option& find_option(const std::string& key) {
  for (const auto& o : options())
    if (key == o.key.name) return o;
  throw Error(ErrorKind::InvalidConfig, "unknown config key '" + key + "'");
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
    for (const auto& o : options()) k.push_back(o.key);
    return k;
  }();
  return keys;
}

void set_option(RunConfig& c, const std::string& key, const std::string& value) {
  find_option(key).set(c, trim(value));
  c.explicit_keys.insert(key);
}

std::string get_option(const RunConfig& c, const std::string& key) { return find_option(key).get(c); }

void apply_config_text(RunConfig& c, const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorKind::InvalidConfig, "config line " + std::to_string(n) + ": expected key = value");
    set_option(c, trim(std::string_view(line).substr(0, eq)), line.substr(eq + 1));
  }
}

void apply_config_file(RunConfig& c, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::InvalidConfig, "cannot read config file " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  apply_config_text(c, os.str());
}

void apply_environment(RunConfig& c) {
  if (const char* out = std::getenv("TAILCAST_OUT"); out && *out) set_option(c, "out_dir", out);
}

std::string config_text(const RunConfig& c) {
  std::ostringstream os;
  for (const auto& o : options()) os << o.key.name << " = " << o.get(c) << '\n';
  return os.str();
}

std::string validate(const RunConfig& c) {
  using dataset::feature_count;
  using dataset::to_string;
  if (c.features && *c.features != c.mode)
    return std::string("features=") + to_string(*c.features) + " (" + std::to_string(feature_count(*c.features)) +
           " features) conflicts with mode=" + to_string(c.mode) + " (" + std::to_string(feature_count(c.mode)) +
           " features)";
  if (auto why = model::validate(model_config(c)); !why.empty()) return why;
  if (!std::isfinite(c.loss_beta) || c.loss_beta < 0.0) return "loss_beta must be finite and >= 0";
  if (!(c.learning_rate > 0.0)) return "learning_rate must be > 0";
  if (c.batch_size < 1) return "batch_size must be >= 1";
  if (c.max_epochs < 1) return "max_epochs must be >= 1";
  if (!(c.min_delta >= 0.0)) return "min_delta must be >= 0";
  if (!(c.evt_quantile > 0.5 && c.evt_quantile < 1.0)) return "evt_quantile must lie in (0.5, 1)";
  if (c.min_exceedances < 1) return "min_exceedances must be >= 1";
  if (c.sparsify_threshold && *c.sparsify_threshold < 0.0) return "sparsify_threshold must be >= 0";
  if (c.max_gap_days < 0) return "max_gap_days must be >= 0";
  if (c.ingest_format != "hourly" && c.ingest_format != "daily") return "ingest_format must be hourly or daily";
  if (!(c.threshold >= 0.0 && c.threshold <= 1.0)) return "threshold must lie in [0, 1]";
  if (c.eval_split != "val" && c.eval_split != "train") return "eval_split must be val or train";
  if (c.train_years < 3) return "train_years must be >= 3";
  if (c.train_end && c.val_start && !(*c.train_end < *c.val_start)) return "train_end must precede val_start";
  auto s = c.synth;
  s.seed = c.seed;
  if (auto why = synth::validate(s); !why.empty()) return why;
  return {};
}

void require_valid(const RunConfig& c) {
  if (auto why = validate(c); !why.empty()) throw Error(ErrorKind::InvalidConfig, why);
}

training::LossKind effective_loss(const RunConfig& c) {
  if (c.loss) return *c.loss;
  return c.mode == dataset::FeatureMode::Di ? training::LossKind::WeightedF1 : training::LossKind::Bce;
}

model::ModelConfig model_config(const RunConfig& c) {
  model::ModelConfig m;
  m.mode = c.mode;
  m.c_in = c.c_in;
  m.c_out = c.c_out;
  m.n_features = dataset::feature_count(c.mode);
  m.n_layers = c.n_layers;
  m.hidden_dim = c.hidden_dim;
  m.n_heads = c.n_heads;
  m.attention_bias = c.attention_bias;
  m.seed = c.seed;
  return m;
}

training::Schedule schedule(const RunConfig& c) {
  training::Schedule s;
  s.max_epochs = c.max_epochs;
  s.batch_size = c.batch_size;
  s.patience = c.patience;
  s.min_delta = c.min_delta;
  s.learning_rate = c.learning_rate;
  // Distinct stream from the initialisation draws, still fixed by the root seed.
  s.seed = c.seed ^ 0x9E3779B97F4A7C15ULL;
  return s;
}

dataset::SplitSpec resolve_split(const RunConfig& c, const ingest::StationData& data) {
  if (c.train_end && c.val_start) return {*c.train_end, *c.val_start};
  if (c.train_end) return {*c.train_end, *c.train_end + 1};
  if (c.val_start) return {*c.val_start - 1, *c.val_start};
  int first_year = std::numeric_limits<int>::max();
  for (const auto& s : data.stations)
    if (!s.records.empty()) first_year = std::min(first_year, s.records.front().date.year());
  if (first_year == std::numeric_limits<int>::max()) throw Error(ErrorKind::EmptyInput, "no station records");
  const Date train_end(first_year + c.train_years - 1, 12, 31);
  return {train_end, train_end + 1};
}

ingest::StationData impute_all(const ingest::StationData& data, int max_gap_days) {
  ingest::ImputePolicy policy;
  policy.max_gap_days = max_gap_days;
  ingest::StationData out;
  for (const auto& s : data.stations) out.stations.push_back(ingest::impute_missing(s, policy));
  return out;
}

std::vector<double> summer_training_t_max(const ingest::StationSeries& series, Date train_end) {
  std::vector<double> v;
  for (const auto& r : series.records)
    if (r.date <= train_end && r.date.is_summer() && r.t_max) v.push_back(*r.t_max);
  return v;
}

std::vector<std::vector<double>> summer_training_series(const ingest::StationData& data, dataset::SplitSpec split) {
  Date first{std::numeric_limits<int>::max()};
  for (const auto& s : data.stations)
    if (!s.records.empty()) first = std::min(first, s.records.front().date);
  if (first > split.train_end) throw Error(ErrorKind::EmptyInput, "no data on or before train_end");
  const auto days = static_cast<std::size_t>(split.train_end - first) + 1;
  std::vector<std::vector<double>> out;
  for (const auto& s : data.stations) {
    std::vector<double> v(days, std::numeric_limits<double>::quiet_NaN());
    for (const auto& r : s.records)
      if (r.date <= split.train_end && r.date.is_summer() && r.t_max) v[static_cast<std::size_t>(r.date - first)] = *r.t_max;
    out.push_back(std::move(v));
  }
  return out;
}

namespace {

std::vector<std::string> ids_of(const ingest::StationData& data) {
  std::vector<std::string> ids;
  for (const auto& s : data.stations) ids.push_back(s.meta.station_id);
  return ids;
}

Error with_station(const Error& e, const std::string& id) {
  const std::string what = e.what();
  const auto colon = what.find(": ");
  return Error(e.kind(), "station " + id + ": " + (colon == std::string::npos ? what : what.substr(colon + 2)));
}

void normalize_panel(dataset::Panel& panel, const dataset::NormStats& norm) {
  for (std::size_t d = 0; d < panel.n_days; ++d)
    for (std::size_t s = 0; s < panel.n_stations; ++s) dataset::normalize_in_place(panel.row(d, s), norm);
}

}  // namespace

Prepared prepare(const RunConfig& c, const ingest::StationData& data) {
  Prepared p;
  p.split = resolve_split(c, data);
  const bool di = c.mode == dataset::FeatureMode::Di;
  for (const auto& s : data.stations) {
    dataset::PreparedStation st;
    st.series = s;
    try {
      st.t90 = dataset::compute_t90(s, p.split.train_end);
      st.labels = dataset::label_pkl(s, st.t90);
      if (di) {
        const auto summer = summer_training_t_max(s, p.split.train_end);
        st.descriptors = evt::compute_descriptors(summer, c.evt_quantile, {c.min_exceedances});
        if (st.descriptors->hit_clamp)
          p.warnings.push_back("station " + s.meta.station_id + ": GPD shape reached the clamp bound");
      }
    } catch (const Error& e) {
      throw with_station(e, s.meta.station_id);
    }
    p.stations.push_back(std::move(st));
  }
  p.panel = dataset::assemble_panel(p.stations, c.mode);

  std::vector<std::span<const double>> rows;
  for (std::size_t d = 0; d < p.panel.n_days && p.panel.date(d) <= p.split.train_end; ++d)
    if (p.panel.valid[d])
      for (std::size_t s = 0; s < p.panel.n_stations; ++s) rows.push_back(p.panel.row(d, s));
  p.norm = dataset::fit_norm_stats(rows, p.panel.n_features);
  normalize_panel(p.panel, p.norm);
  p.warnings.insert(p.warnings.end(), p.norm.warnings.begin(), p.norm.warnings.end());

  std::vector<double> w(p.stations.size(), 1.0);
  if (di) {
    std::vector<evt::GpdDescriptors> d;
    for (const auto& st : p.stations) d.push_back(*st.descriptors);
    w = graph::station_weights(d);
  }
  p.graph = graph::build_graph(ids_of(data), summer_training_series(data, p.split), w, c.sparsify_threshold);
  p.warnings.insert(p.warnings.end(), p.graph.warnings.begin(), p.graph.warnings.end());
  p.windows = dataset::make_windows(p.panel, c.c_in, c.c_out, p.split);
  return p;
}

Prepared prepare_from_checkpoint(const model::TrainedModel& t, const ingest::StationData& data) {
  const auto& mc = t.model.config();
  const auto ids = ids_of(data);
  if (ids.size() != t.station_ids.size())
    throw Error(ErrorKind::ShapeMismatch, "checkpoint has " + std::to_string(t.station_ids.size()) +
                                              " stations, data has " + std::to_string(ids.size()));
  for (std::size_t i = 0; i < ids.size(); ++i)
    if (ids[i] != t.station_ids[i])
      throw Error(ErrorKind::ShapeMismatch, "station " + std::to_string(i) + " is " + ids[i] + " in the data but " +
                                                t.station_ids[i] + " in the checkpoint");
  const bool di = mc.mode == dataset::FeatureMode::Di;
  if (di && t.descriptors.size() != ids.size())
    throw Error(ErrorKind::MissingDescriptors, "checkpoint lacks per-station GPD descriptors");
  Prepared p;
  p.split = t.split;
  for (std::size_t i = 0; i < data.stations.size(); ++i) {
    dataset::PreparedStation st;
    st.series = data.stations[i];
    st.t90 = t.t90[i];
    st.labels = dataset::label_pkl(st.series, st.t90);
    if (di) st.descriptors = t.descriptors[i];
    p.stations.push_back(std::move(st));
  }
  p.panel = dataset::assemble_panel(p.stations, mc.mode);
  p.norm = t.norm;
  normalize_panel(p.panel, p.norm);
  p.graph.station_ids = t.station_ids;
  p.graph.a = t.adjacency;
  p.graph.w = t.station_weights;
  p.windows = dataset::make_windows(p.panel, mc.c_in, mc.c_out, p.split);
  return p;
}

// --- commands ---------------------------------------------------------------------------

namespace {

std::filesystem::path write_output(CommandResult& r, const std::filesystem::path& path, const std::string& text) {
  csv::write_text(path, text);
  r.outputs.push_back(path);
  return path;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

ingest::StationData load_imputed(const RunConfig& c) {
  return impute_all(ingest::load_data_dir(c.data_dir), c.max_gap_days);
}

}  // namespace

CommandResult run_synth(const RunConfig& c) {
  require_valid(c);
  auto s = c.synth;
  s.seed = c.seed;
  const auto data = synth::generate(s);
  ingest::write_data_dir(data, c.out_dir);
  CommandResult r;
  r.outputs.push_back(c.out_dir / "stations.csv");
  for (const auto& st : data.stations) r.outputs.push_back(c.out_dir / (st.meta.station_id + ".csv"));
  r.summary = "wrote " + std::to_string(data.stations.size()) + " stations x " + std::to_string(s.n_years) +
              " years to " + c.out_dir.string();
  return r;
}

CommandResult run_ingest(const RunConfig& c) {
  require_valid(c);
  ingest::StationData raw;
  if (c.ingest_format == "daily") {
    raw = ingest::load_data_dir(c.data_dir);
  } else {
    for (const auto& meta : ingest::read_station_meta(c.data_dir / "stations.csv")) {
      std::string id;
      const auto hourly = ingest::parse_hourly_csv(c.data_dir / (meta.station_id + ".csv"), &id);
      if (id != meta.station_id)
        throw Error(ErrorKind::MalformedRow, "hourly file for " + meta.station_id + " carries station id " + id);
      raw.stations.push_back({meta, ingest::aggregate_hourly_to_daily(hourly)});
    }
  }
  const auto imputed = impute_all(raw, c.max_gap_days);
  ingest::write_data_dir(imputed, c.out_dir);
  CommandResult r;
  std::size_t before = 0, after = 0;
  for (std::size_t i = 0; i < raw.stations.size(); ++i) {
    before += raw.stations[i].records.size();
    after += imputed.stations[i].records.size();
  }
  r.outputs.push_back(c.out_dir / "stations.csv");
  r.summary = "ingested " + std::to_string(raw.stations.size()) + " stations, " + std::to_string(after) +
              " complete daily records (" + std::to_string(before) + " raw days)";
  return r;
}

CommandResult run_fit_evt(const RunConfig& c) {
  require_valid(c);
  const auto data = load_imputed(c);
  const auto split = resolve_split(c, data);
  std::vector<evt::FitReportRow> rows;
  std::vector<dataset::PreparedStation> labelled;
  CommandResult r;
  for (const auto& s : data.stations) {
    evt::FitReportRow row{s.meta.station_id, {}, {}};
    try {
      row.descriptors = evt::compute_descriptors(summer_training_t_max(s, split.train_end), c.evt_quantile,
                                                 {c.min_exceedances});
    } catch (const Error& e) {
      row.error = e.what();
      r.warnings.push_back("station " + s.meta.station_id + ": " + e.what());
    }
    rows.push_back(row);
    try {
      dataset::PreparedStation st;
      st.series = s;
      st.t90 = dataset::compute_t90(s, split.train_end);
      st.labels = dataset::label_pkl(s, st.t90);
      labelled.push_back(std::move(st));
    } catch (const Error& e) {
      r.warnings.push_back("station " + s.meta.station_id + ": no labels, " + e.what());
    }
  }
  write_output(r, c.out_dir / "evt_fit.csv", evt::fit_report_csv(rows));
  write_output(r, c.out_dir / "labels.csv", dataset::labels_csv(labelled));
  const auto ok = std::count_if(rows.begin(), rows.end(), [](const auto& x) { return x.error.empty(); });
  std::ostringstream os;
  os << "fitted " << ok << "/" << rows.size() << " stations; summer heatwave-day fraction "
     << csv::format_double(dataset::summer_positive_fraction(labelled));
  r.summary = os.str();
  return r;
}

CommandResult run_build_graph(const RunConfig& c) {
  require_valid(c);
  const auto data = load_imputed(c);
  const auto split = resolve_split(c, data);
  std::vector<double> w(data.stations.size(), 1.0);
  std::vector<evt::GpdDescriptors> desc;
  if (c.mode == dataset::FeatureMode::Di) {
    for (const auto& s : data.stations) {
      try {
        desc.push_back(evt::compute_descriptors(summer_training_t_max(s, split.train_end), c.evt_quantile,
                                                {c.min_exceedances}));
      } catch (const Error& e) {
        throw with_station(e, s.meta.station_id);
      }
    }
    w = graph::station_weights(desc);
  }
  const auto ids = ids_of(data);
  const auto g = graph::build_graph(ids, summer_training_series(data, split), w, c.sparsify_threshold);
  CommandResult r;
  write_output(r, c.out_dir / "rho.csv", graph::matrix_csv(g.rho, ids));
  write_output(r, c.out_dir / "adjacency.csv", graph::matrix_csv(g.a, ids));
  write_output(r, c.out_dir / "weights.csv", graph::weights_csv(ids, w, desc));
  r.warnings = g.warnings;
  std::size_t edges = 0;
  for (std::size_t i = 0; i < g.a.n; ++i)
    for (std::size_t j = 0; j < g.a.n; ++j) edges += (i != j && g.a(i, j) > 0.0) ? 1 : 0;
  r.summary = std::to_string(ids.size()) + " stations, " + std::to_string(edges) + " directed edges";
  return r;
}

std::string dataset_manifest(const RunConfig& c, const Prepared& p) {
  nlohmann::ordered_json m;
  m["mode"] = dataset::to_string(c.mode);
  m["train_end"] = p.split.train_end.iso();
  m["val_start"] = p.split.val_start.iso();
  m["c_in"] = c.c_in;
  m["c_out"] = c.c_out;
  m["stations"] = p.graph.station_ids;
  m["train_windows"] = p.windows.train.size();
  m["val_windows"] = p.windows.val.size();
  m["summer_positive_fraction"] = dataset::summer_positive_fraction(p.stations);
  nlohmann::ordered_json features = nlohmann::ordered_json::array();
  const auto layout = dataset::feature_layout(c.mode);
  for (std::size_t k = 0; k < layout.size(); ++k)
    features.push_back({{"name", layout[k].name},
                        {"unit", layout[k].unit},
                        {"mean", p.norm.mean[k]},
                        {"sd", p.norm.sd[k]},
                        {"passthrough", static_cast<bool>(p.norm.passthrough[k])}});
  m["features"] = features;
  return m.dump(2) + "\n";
}

TrainOutcome train_model(const RunConfig& c, const std::function<void(const training::EpochRecord&)>& on_epoch) {
  require_valid(c);
  const auto data = load_imputed(c);
  Prepared p = prepare(c, data);
  if (p.windows.train.empty()) throw Error(ErrorKind::EmptyWindowSet, "no training windows before " + p.split.train_end.iso());
  if (p.windows.val.empty()) throw Error(ErrorKind::EmptyWindowSet, "no validation windows from " + p.split.val_start.iso());

  TrainOutcome out;
  out.trained.model = model::GatModel(model_config(c));
  const auto graph = model::make_attention_graph(p.graph.a);
  training::LossConfig loss;
  loss.kind = effective_loss(c);
  loss.beta = c.loss_beta;
  if (c.mode == dataset::FeatureMode::Di) loss.station_weights = p.graph.w;
  out.report = training::train(out.trained.model, p.windows.train, p.windows.val, graph, loss, schedule(c), on_epoch);

  auto& t = out.trained;
  t.norm = p.norm;
  t.station_ids = p.graph.station_ids;
  t.adjacency = p.graph.a;
  t.station_weights = p.graph.w;
  t.split = p.split;
  for (const auto& st : p.stations) {
    t.t90.push_back(st.t90);
    if (st.descriptors) t.descriptors.push_back(*st.descriptors);
  }
  out.result.warnings = p.warnings;
  out.dataset_manifest = dataset_manifest(c, p);
  std::ostringstream os;
  os << "mode " << dataset::to_string(c.mode) << ", " << p.windows.train.size() << " training / "
     << p.windows.val.size() << " validation windows, best epoch " << out.report.best_epoch << " of "
     << out.report.epochs.size() << " (" << training::to_string(out.report.stop_reason) << "), best val loss "
     << csv::format_double(out.report.best_val_loss);
  out.result.summary = os.str();
  return out;
}

CommandResult run_train(const RunConfig& c, const std::function<void(const training::EpochRecord&)>& on_epoch) {
  TrainOutcome o = train_model(c, on_epoch);
  CommandResult& r = o.result;
  model::save_checkpoint(o.trained, c.out_dir / "model.ckpt");
  r.outputs.push_back(c.out_dir / "model.ckpt");
  write_output(r, c.out_dir / "epochs.csv", training::epoch_csv(o.report));
  write_output(r, c.out_dir / "run.cfg", config_text(c));
  write_output(r, c.out_dir / "dataset.json", o.dataset_manifest);

  nlohmann::ordered_json m;
  m["command"] = "train";
  m["seed"] = c.seed;
  nlohmann::ordered_json cfg;
  for (const auto& k : config_keys()) cfg[k.name] = get_option(c, k.name);
  m["config"] = cfg;
  m["effective_loss"] = training::to_string(effective_loss(c));
  m["train_end"] = o.trained.split.train_end.iso();
  m["val_start"] = o.trained.split.val_start.iso();
  m["best_epoch"] = o.report.best_epoch;
  m["epochs_run"] = o.report.epochs.size();
  m["best_val_loss"] = o.report.best_val_loss;
  m["stop_reason"] = training::to_string(o.report.stop_reason);
  m["warnings"] = r.warnings;
  write_output(r, c.out_dir / "manifest.json", m.dump(2) + "\n");
  return r;
}

metrics::MetricsReport evaluate_model(const model::TrainedModel& t, const RunConfig& c,
                                      training::Predictions* predictions) {
  const auto& mc = t.model.config();
  const bool mode_given = c.explicit_keys.count("mode") || c.explicit_keys.count("features");
  if (mode_given) {
    const auto requested = c.features ? *c.features : c.mode;
    if (dataset::feature_count(requested) != mc.n_features)
      throw Error(ErrorKind::InvalidConfig, "checkpoint expects " + std::to_string(mc.n_features) +
                                                " features per station-day, config requests " +
                                                std::to_string(dataset::feature_count(requested)) + " (" +
                                                dataset::to_string(requested) + ")");
  }
  const auto data = load_imputed(c);
  const Prepared p = prepare_from_checkpoint(t, data);
  const auto& ws = c.eval_split == "train" ? p.windows.train : p.windows.val;
  if (ws.empty()) throw Error(ErrorKind::EmptyWindowSet, "no " + c.eval_split + " windows to evaluate");
  const auto graph = model::make_attention_graph(t.adjacency);
  training::Predictions pred = training::predict(t.model, ws, graph, c.batch_size);
  auto report = metrics::evaluate(pred.y, pred.p, c.threshold);
  if (predictions) *predictions = std::move(pred);
  return report;
}

CommandResult run_evaluate(const RunConfig& c, const EvaluateOptions& o) {
  require_valid(c);
  const auto t = model::load_checkpoint(o.checkpoint);
  training::Predictions pred;
  auto report = evaluate_model(t, c, &pred);
  if (o.per_station) metrics::add_station_breakdown(report, pred.y, pred.p, t.station_ids);
  CommandResult r;
  write_output(r, c.out_dir / "metrics.json", metrics::report_json(report));
  if (report.auc_roc) write_output(r, c.out_dir / "roc.csv", metrics::curve_csv(metrics::roc_auc(pred.y, pred.p).curve));
  else r.warnings.push_back("single-class labels: ROC curve not written");
  if (report.average_precision)
    write_output(r, c.out_dir / "pr.csv", metrics::curve_csv(metrics::pr_curve_ap(pred.y, pred.p).curve));
  else r.warnings.push_back("no positive labels: PR curve not written");
  if (o.threshold_sweep) write_output(r, c.out_dir / "threshold_sweep.csv", metrics::threshold_sweep_csv(pred.y, pred.p));
  const auto& m = report.scalars;
  std::ostringstream os;
  os << "BA " << csv::format_double(m.balanced_accuracy) << ", precision " << csv::format_double(m.precision)
     << ", recall " << csv::format_double(m.recall) << ", F1 " << csv::format_double(m.f1) << ", AUC "
     << (report.auc_roc ? csv::format_double(*report.auc_roc) : "n/a");
  r.summary = os.str();
  return r;
}

CommandResult run_compare(const RunConfig& c, const std::filesystem::path& a, const std::filesystem::path& b) {
  const auto rows = metrics::compare_reports(read_file(a), read_file(b));
  CommandResult r;
  const auto text = metrics::comparison_csv(rows);
  write_output(r, c.out_dir / "comparison.csv", text);
  r.summary = text;
  return r;
}

}  // namespace tailcast::pipeline
