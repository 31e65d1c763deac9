#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "date.hpp"

namespace tailcast::ingest {

struct StationMeta {
  std::string station_id;
  double lon = 0.0;  // degrees east
  double lat = 0.0;  // degrees north
  std::string name;
};

// Daily values in fixed units: degC, percent, m/s, mm, kPa. Missing = nullopt.
struct DailyRecord {
  Date date;
  std::optional<double> t_max, t_min, t_avg, t_dew, rh, wind, precip, pressure;

  bool complete() const noexcept {
    return t_max && t_min && t_avg && t_dew && rh && wind && precip && pressure;
  }
  bool operator==(const DailyRecord&) const = default;
};

struct StationSeries {
  StationMeta meta;
  std::vector<DailyRecord> records;  // strictly increasing dates
};

enum class Field { TMax, TMin, TAvg, TDew, Rh, Wind, Precip, Pressure };
inline constexpr std::array<Field, 8> kAllFields{Field::TMax, Field::TMin,   Field::TAvg, Field::TDew,
                                                 Field::Rh,   Field::Wind,   Field::Precip, Field::Pressure};
const char* field_name(Field f) noexcept;
std::optional<double>& field_ref(DailyRecord& r, Field f) noexcept;
const std::optional<double>& field_ref(const DailyRecord& r, Field f) noexcept;

// Maps canonical columns to source header names with an affine unit conversion
// (value_in_canonical_units = scale * raw + offset).
struct ColumnMapping {
  struct Column {
    std::string header;
    double scale = 1.0;
    double offset = 0.0;
  };
  std::string station_id_header = "station_id";
  std::string date_header = "date";
  std::map<Field, Column> columns;

  static ColumnMapping canonical();
};

inline constexpr const char* kDailyHeader = "station_id,date,t_max,t_min,t_avg,t_dew,rh,wind,precip,pressure";
inline constexpr const char* kMetaHeader = "station_id,name,lon,lat";

StationSeries parse_station_csv(const std::filesystem::path& path,
                                const ColumnMapping& schema = ColumnMapping::canonical());
std::string serialize_station_csv(const StationSeries& series);
void write_station_csv(const StationSeries& series, const std::filesystem::path& path);

std::vector<StationMeta> read_station_meta(const std::filesystem::path& path);
void write_station_meta(const std::vector<StationMeta>& meta, const std::filesystem::path& path);

// Range checks shared by parsing and the generator; empty string when valid.
std::string validate_record(const DailyRecord& r);

struct HourlyRecord {
  Date date;
  int hour = 0;  // 0..23, local standard time
  std::optional<double> temp, t_dew, rh, wind, precip, pressure;
};

inline constexpr double kDefaultCompleteness = 18.0 / 24.0;

// Groups time-ordered hourly rows by date. A day whose temperature count falls below
// completeness * 24 gets its temperature fields marked missing.
std::vector<DailyRecord> aggregate_hourly_to_daily(const std::vector<HourlyRecord>& hourly,
                                                   double completeness = kDefaultCompleteness);

// Hourly CSV: station_id,timestamp,temp,t_dew,rh,wind,precip,pressure with
// timestamp "YYYY-MM-DDTHH:MM" (or a space instead of T).
std::vector<HourlyRecord> parse_hourly_csv(const std::filesystem::path& path, std::string* station_id);

struct ImputePolicy {
  enum class Kind { DropDay, LinearInterpolate };
  Kind kind = Kind::LinearInterpolate;
  int max_gap_days = 3;
  // When false, gaps that cannot be bridged raise GapTooLarge instead of dropping days.
  bool allow_drop = true;
};

// Output has no missing values; dates absent from the output are gaps downstream code
// must not bridge.
StationSeries impute_missing(const StationSeries& series, const ImputePolicy& policy = {});

struct StationData {
  std::vector<StationSeries> stations;
};

// Reads <dir>/stations.csv plus <dir>/<station_id>.csv for every listed station.
StationData load_data_dir(const std::filesystem::path& dir);
void write_data_dir(const StationData& data, const std::filesystem::path& dir);

}  // namespace tailcast::ingest
