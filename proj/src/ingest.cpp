#include "ingest.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "csv.hpp"
#include "error.hpp"

namespace tailcast::ingest {

const char* field_name(Field f) noexcept {
  switch (f) {
    case Field::TMax: return "t_max";
    case Field::TMin: return "t_min";
    case Field::TAvg: return "t_avg";
    case Field::TDew: return "t_dew";
    case Field::Rh: return "rh";
    case Field::Wind: return "wind";
    case Field::Precip: return "precip";
    case Field::Pressure: return "pressure";
  }
  return "?";
}

std::optional<double>& field_ref(DailyRecord& r, Field f) noexcept {
  switch (f) {
    case Field::TMax: return r.t_max;
    case Field::TMin: return r.t_min;
    case Field::TAvg: return r.t_avg;
    case Field::TDew: return r.t_dew;
    case Field::Rh: return r.rh;
    case Field::Wind: return r.wind;
    case Field::Precip: return r.precip;
    case Field::Pressure: break;
  }
  return r.pressure;
}

const std::optional<double>& field_ref(const DailyRecord& r, Field f) noexcept {
  return field_ref(const_cast<DailyRecord&>(r), f);
}

ColumnMapping ColumnMapping::canonical() {
  ColumnMapping m;
  for (Field f : kAllFields) m.columns[f] = Column{field_name(f), 1.0, 0.0};
  return m;
}

std::string validate_record(const DailyRecord& r) {
  if (r.rh && (*r.rh < 0.0 || *r.rh > 100.0)) return "rh out of [0,100]";
  if (r.wind && *r.wind < 0.0) return "negative wind";
  if (r.precip && *r.precip < 0.0) return "negative precip";
  if (r.pressure && *r.pressure <= 0.0) return "non-positive pressure";
  if (r.t_min && r.t_max && *r.t_min > *r.t_max) return "t_min > t_max";
  if (r.t_min && r.t_avg && *r.t_min > *r.t_avg) return "t_min > t_avg";
  if (r.t_avg && r.t_max && *r.t_avg > *r.t_max) return "t_avg > t_max";
  return {};
}

namespace {

std::size_t find_column(const std::vector<std::string>& header, const std::string& name) {
  auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw Error(ErrorKind::MissingColumn, "column '" + name + "' not in header");
  return static_cast<std::size_t>(it - header.begin());
}

std::string malformed(std::size_t line, const std::string& why) {
  return "line " + std::to_string(line) + ": " + why;
}

}  // namespace

StationSeries parse_station_csv(const std::filesystem::path& path, const ColumnMapping& schema) {
  const auto lines = csv::read_lines(path);
  if (lines.empty()) throw Error(ErrorKind::MissingColumn, path.string() + ": missing header row");
  const auto header = csv::split(lines[0]);
  const std::size_t id_col = find_column(header, schema.station_id_header);
  const std::size_t date_col = find_column(header, schema.date_header);
  std::vector<std::pair<Field, std::size_t>> cols;
  for (const auto& [field, col] : schema.columns) cols.emplace_back(field, find_column(header, col.header));

  StationSeries out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const std::size_t lineno = i + 1;
    const auto cells = csv::split(lines[i]);
    if (cells.size() != header.size())
      throw Error(ErrorKind::MalformedRow, malformed(lineno, "expected " + std::to_string(header.size()) + " cells"));
    const auto date = Date::parse(cells[date_col]);
    if (!date) throw Error(ErrorKind::MalformedRow, malformed(lineno, "bad date '" + cells[date_col] + "'"));
    if (out.meta.station_id.empty()) {
      out.meta.station_id = cells[id_col];
    } else if (cells[id_col] != out.meta.station_id) {
      throw Error(ErrorKind::MalformedRow, malformed(lineno, "station_id changes within file"));
    }
    DailyRecord rec;
    rec.date = *date;
    for (const auto& [field, col] : cols) {
      const std::string& cell = cells[col];
      if (cell.empty()) continue;
      const auto v = csv::parse_double(cell);
      if (!v) throw Error(ErrorKind::MalformedRow, malformed(lineno, std::string("bad number in ") + field_name(field)));
      const auto& m = schema.columns.at(field);
      field_ref(rec, field) = m.scale * *v + m.offset;
    }
    if (auto why = validate_record(rec); !why.empty()) throw Error(ErrorKind::MalformedRow, malformed(lineno, why));
    out.records.push_back(rec);
  }
  std::stable_sort(out.records.begin(), out.records.end(),
                   [](const DailyRecord& a, const DailyRecord& b) { return a.date < b.date; });
  for (std::size_t i = 1; i < out.records.size(); ++i) {
    if (out.records[i].date == out.records[i - 1].date)
      throw Error(ErrorKind::DuplicateDate, out.records[i].date.iso());
  }
  return out;
}

std::string serialize_station_csv(const StationSeries& series) {
  std::ostringstream os;
  os << kDailyHeader << '\n';
  for (const auto& r : series.records) {
    os << series.meta.station_id << ',' << r.date.iso();
    for (Field f : kAllFields) os << ',' << csv::format_optional(field_ref(r, f));
    os << '\n';
  }
  return os.str();
}

void write_station_csv(const StationSeries& series, const std::filesystem::path& path) {
  csv::write_text(path, serialize_station_csv(series));
}

std::vector<StationMeta> read_station_meta(const std::filesystem::path& path) {
  const auto lines = csv::read_lines(path);
  if (lines.empty()) throw Error(ErrorKind::MissingColumn, path.string() + ": missing header row");
  const auto header = csv::split(lines[0]);
  const std::size_t id_col = find_column(header, "station_id");
  const std::size_t name_col = find_column(header, "name");
  const std::size_t lon_col = find_column(header, "lon");
  const std::size_t lat_col = find_column(header, "lat");
  std::vector<StationMeta> out;
  std::set<std::string> seen;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto cells = csv::split(lines[i]);
    if (cells.size() != header.size()) throw Error(ErrorKind::MalformedRow, malformed(i + 1, "cell count"));
    StationMeta m;
    m.station_id = cells[id_col];
    m.name = cells[name_col];
    const auto lon = csv::parse_double(cells[lon_col]);
    const auto lat = csv::parse_double(cells[lat_col]);
    if (!lon || !lat || *lon < -180.0 || *lon > 180.0 || *lat < -90.0 || *lat > 90.0)
      throw Error(ErrorKind::MalformedRow, malformed(i + 1, "bad coordinates"));
    m.lon = *lon;
    m.lat = *lat;
    if (m.station_id.empty() || !seen.insert(m.station_id).second)
      throw Error(ErrorKind::MalformedRow, malformed(i + 1, "empty or duplicate station_id"));
    out.push_back(std::move(m));
  }
  return out;
}

void write_station_meta(const std::vector<StationMeta>& meta, const std::filesystem::path& path) {
  std::ostringstream os;
  os << kMetaHeader << '\n';
  for (const auto& m : meta)
    os << m.station_id << ',' << m.name << ',' << csv::format_double(m.lon) << ',' << csv::format_double(m.lat) << '\n';
  csv::write_text(path, os.str());
}

std::vector<DailyRecord> aggregate_hourly_to_daily(const std::vector<HourlyRecord>& hourly, double completeness) {
  if (hourly.empty()) throw Error(ErrorKind::EmptyInput, "no hourly observations");
  std::vector<DailyRecord> out;
  std::size_t i = 0;
  while (i < hourly.size()) {
    const Date day = hourly[i].date;
    struct Acc {
      double sum = 0.0;
      int n = 0;
      double lo = INFINITY, hi = -INFINITY;
      void add(const std::optional<double>& v) {
        if (!v) return;
        sum += *v;
        ++n;
        lo = std::min(lo, *v);
        hi = std::max(hi, *v);
      }
      std::optional<double> mean() const { return n ? std::optional(sum / n) : std::nullopt; }
    } temp, dew, rh, wind, precip, pres;
    for (; i < hourly.size() && hourly[i].date == day; ++i) {
      const auto& h = hourly[i];
      temp.add(h.temp);
      dew.add(h.t_dew);
      rh.add(h.rh);
      wind.add(h.wind);
      precip.add(h.precip);
      pres.add(h.pressure);
    }
    DailyRecord r;
    r.date = day;
    if (temp.n > 0 && static_cast<double>(temp.n) >= completeness * 24.0) {
      r.t_max = temp.hi;
      r.t_min = temp.lo;
      // Clamp guards against roundoff putting the mean a hair outside [lo, hi].
      r.t_avg = std::clamp(*temp.mean(), temp.lo, temp.hi);
    }
    r.t_dew = dew.mean();
    r.rh = rh.mean();
    r.wind = wind.mean();
    if (precip.n > 0) r.precip = precip.sum;
    r.pressure = pres.mean();
    if (!out.empty() && out.back().date >= day)
      throw Error(ErrorKind::MalformedRow, "hourly records not time-ordered at " + day.iso());
    out.push_back(r);
  }
  return out;
}

std::vector<HourlyRecord> parse_hourly_csv(const std::filesystem::path& path, std::string* station_id) {
  const auto lines = csv::read_lines(path);
  if (lines.empty()) throw Error(ErrorKind::MissingColumn, path.string() + ": missing header row");
  const auto header = csv::split(lines[0]);
  const std::size_t id_col = find_column(header, "station_id");
  const std::size_t ts_col = find_column(header, "timestamp");
  const std::array<std::size_t, 6> value_cols{find_column(header, "temp"), find_column(header, "t_dew"),
                                              find_column(header, "rh"),   find_column(header, "wind"),
                                              find_column(header, "precip"), find_column(header, "pressure")};
  std::vector<HourlyRecord> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto cells = csv::split(lines[i]);
    if (cells.size() != header.size()) throw Error(ErrorKind::MalformedRow, malformed(i + 1, "cell count"));
    const std::string& ts = cells[ts_col];
    const auto date = Date::parse(std::string_view(ts).substr(0, 10));
    const auto hour = ts.size() >= 13 ? csv::parse_double(std::string_view(ts).substr(11, 2)) : std::nullopt;
    if (!date || !hour || *hour < 0 || *hour > 23)
      throw Error(ErrorKind::MalformedRow, malformed(i + 1, "bad timestamp '" + ts + "'"));
    if (station_id && station_id->empty()) *station_id = cells[id_col];
    HourlyRecord h;
    h.date = *date;
    h.hour = static_cast<int>(*hour);
    std::array<std::optional<double>*, 6> dst{&h.temp, &h.t_dew, &h.rh, &h.wind, &h.precip, &h.pressure};
    for (std::size_t k = 0; k < value_cols.size(); ++k) {
      const std::string& cell = cells[value_cols[k]];
      if (cell.empty()) continue;
      *dst[k] = csv::parse_double(cell);
      if (!*dst[k]) throw Error(ErrorKind::MalformedRow, malformed(i + 1, "bad number"));
    }
    out.push_back(h);
  }
  std::stable_sort(out.begin(), out.end(), [](const HourlyRecord& a, const HourlyRecord& b) {
    return a.date != b.date ? a.date < b.date : a.hour < b.hour;
  });
  return out;
}

StationSeries impute_missing(const StationSeries& series, const ImputePolicy& policy) {
  StationSeries out;
  out.meta = series.meta;
  if (series.records.empty()) return out;

  if (policy.kind == ImputePolicy::Kind::DropDay) {
    for (const auto& r : series.records)
      if (r.complete()) out.records.push_back(r);
    return out;
  }

  // Reindex onto a contiguous calendar so absent dates count as gaps.
  const Date first = series.records.front().date;
  const Date last = series.records.back().date;
  const int n = (last - first) + 1;
  std::vector<DailyRecord> grid(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) grid[k].date = first + k;
  for (const auto& r : series.records) grid[static_cast<std::size_t>(r.date - first)] = r;

  std::vector<bool> drop(grid.size(), false);
  for (Field f : kAllFields) {
    std::size_t k = 0;
    while (k < grid.size()) {
      if (field_ref(grid[k], f)) {
        ++k;
        continue;
      }
      std::size_t end = k;
      while (end < grid.size() && !field_ref(grid[end], f)) ++end;
      const std::size_t len = end - k;
      const bool bounded = k > 0 && end < grid.size();
      if (bounded && len <= static_cast<std::size_t>(policy.max_gap_days)) {
        const double a = *field_ref(grid[k - 1], f);
        const double b = *field_ref(grid[end], f);
        for (std::size_t j = k; j < end; ++j) {
          const double t = static_cast<double>(j - (k - 1)) / static_cast<double>(len + 1);
          field_ref(grid[j], f) = a + t * (b - a);
        }
      } else {
        if (!policy.allow_drop)
          throw Error(ErrorKind::GapTooLarge, series.meta.station_id + " " + field_name(f) + " " +
                                                  grid[k].date.iso() + ".." + grid[end - 1].date.iso());
        for (std::size_t j = k; j < end; ++j) drop[j] = true;
      }
      k = end;
    }
  }
  for (std::size_t k = 0; k < grid.size(); ++k)
    if (!drop[k]) out.records.push_back(grid[k]);
  return out;
}

StationData load_data_dir(const std::filesystem::path& dir) {
  StationData data;
  for (auto& meta : read_station_meta(dir / "stations.csv")) {
    auto series = parse_station_csv(dir / (meta.station_id + ".csv"));
    if (!series.meta.station_id.empty() && series.meta.station_id != meta.station_id)
      throw Error(ErrorKind::MalformedRow, "station file " + meta.station_id + ".csv carries id " + series.meta.station_id);
    series.meta = std::move(meta);
    data.stations.push_back(std::move(series));
  }
  if (data.stations.empty()) throw Error(ErrorKind::EmptyInput, "no stations listed in " + (dir / "stations.csv").string());
  return data;
}

void write_data_dir(const StationData& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<StationMeta> meta;
  for (const auto& s : data.stations) {
    meta.push_back(s.meta);
    write_station_csv(s, dir / (s.meta.station_id + ".csv"));
  }
  write_station_meta(meta, dir / "stations.csv");
}

}  // namespace tailcast::ingest
