#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <random>

#include "error.hpp"
#include "ingest.hpp"
#include "support.hpp"

using namespace tailcast;
using namespace tailcast::ingest;

namespace {

void write(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

DailyRecord full_day(Date d, double t) {
  DailyRecord r;
  r.date = d;
  r.t_max = t + 5;
  r.t_min = t - 5;
  r.t_avg = t;
  r.t_dew = t - 8;
  r.rh = 60;
  r.wind = 3;
  r.precip = 0.5;
  r.pressure = 101.2;
  return r;
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::Io;
}

const char* kRow1 = "S1,2021-06-29,30,15,22,10,55,3,0,101.1\n";
const char* kRow2 = "S1,2021-06-28,28,14,21,9,60,2,1.5,101.3\n";
const char* kRow3 = "S1,2021-06-30,31,16,23,11,50,4,0,100.9\n";

}  // namespace

TEST_SUITE("ingest") {
  TEST_CASE("well-formed csv parses into a sorted series") {
    const auto dir = fixture::temp_dir("ingest_parse");
    write(dir / "S1.csv", std::string(kDailyHeader) + "\n" + kRow1 + kRow2 + kRow3);
    const auto s = parse_station_csv(dir / "S1.csv");
    REQUIRE(s.records.size() == 3);
    CHECK(s.meta.station_id == "S1");
    CHECK(s.records[0].date == Date(2021, 6, 28));
    CHECK(s.records[2].date == Date(2021, 6, 30));
    CHECK(*s.records[0].precip == 1.5);
  }

  TEST_CASE("duplicate date is rejected") {
    const auto dir = fixture::temp_dir("ingest_dup");
    write(dir / "S1.csv", std::string(kDailyHeader) + "\n" + kRow2 + kRow1 + kRow2);
    CHECK(kind_of([&] { parse_station_csv(dir / "S1.csv"); }) == ErrorKind::DuplicateDate);
  }

  TEST_CASE("out-of-range humidity is a malformed row") {
    const auto dir = fixture::temp_dir("ingest_rh");
    write(dir / "S1.csv", std::string(kDailyHeader) + "\nS1,2021-06-28,28,14,21,9,112,2,1.5,101.3\n");
    CHECK(kind_of([&] { parse_station_csv(dir / "S1.csv"); }) == ErrorKind::MalformedRow);
  }

  TEST_CASE("missing column and bad temperature ordering are rejected") {
    const auto dir = fixture::temp_dir("ingest_cols");
    write(dir / "a.csv", "station_id,date,t_max\nS1,2021-06-28,20\n");
    CHECK(kind_of([&] { parse_station_csv(dir / "a.csv"); }) == ErrorKind::MissingColumn);
    write(dir / "b.csv", std::string(kDailyHeader) + "\nS1,2021-06-28,10,14,12,9,50,2,0,101\n");
    CHECK(kind_of([&] { parse_station_csv(dir / "b.csv"); }) == ErrorKind::MalformedRow);
  }

  TEST_CASE("column mapping converts units") {
    const auto dir = fixture::temp_dir("ingest_map");
    write(dir / "x.csv", "id,day,tx,tn,tm,td,hum,ws,pr,p\nS9,2020-07-01,86,50,68,41,40,10,0,1013\n");
    ColumnMapping m;
    m.station_id_header = "id";
    m.date_header = "day";
    m.columns[Field::TMax] = {"tx", 5.0 / 9.0, -160.0 / 9.0};
    m.columns[Field::TMin] = {"tn", 5.0 / 9.0, -160.0 / 9.0};
    m.columns[Field::TAvg] = {"tm", 5.0 / 9.0, -160.0 / 9.0};
    m.columns[Field::TDew] = {"td", 5.0 / 9.0, -160.0 / 9.0};
    m.columns[Field::Rh] = {"hum"};
    m.columns[Field::Wind] = {"ws", 1.0 / 3.6};
    m.columns[Field::Precip] = {"pr"};
    m.columns[Field::Pressure] = {"p", 0.1};
    const auto s = parse_station_csv(dir / "x.csv", m);
    REQUIRE(s.records.size() == 1);
    CHECK(*s.records[0].t_max == doctest::Approx(30.0).epsilon(1e-12));
    CHECK(*s.records[0].t_min == doctest::Approx(10.0).epsilon(1e-12));
    CHECK(*s.records[0].pressure == doctest::Approx(101.3).epsilon(1e-12));
  }

  TEST_CASE("serialize then parse is the identity") {
    StationSeries s;
    s.meta.station_id = "RT1";
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n(15, 6);
    for (int d = 0; d < 40; ++d) s.records.push_back(full_day(Date(2015, 5, 1) + d, n(rng)));
    s.records[7].wind.reset();
    const auto dir = fixture::temp_dir("ingest_rt");
    write_station_csv(s, dir / "RT1.csv");
    const auto back = parse_station_csv(dir / "RT1.csv");
    CHECK(back.meta.station_id == "RT1");
    CHECK(back.records == s.records);
  }

  TEST_CASE("row order does not change the parsed series") {
    const auto dir = fixture::temp_dir("ingest_perm");
    write(dir / "a.csv", std::string(kDailyHeader) + "\n" + kRow1 + kRow2 + kRow3);
    write(dir / "b.csv", std::string(kDailyHeader) + "\n" + kRow3 + kRow1 + kRow2);
    CHECK(parse_station_csv(dir / "a.csv").records == parse_station_csv(dir / "b.csv").records);
  }

  TEST_CASE("constant hourly temperatures aggregate to that constant") {
    std::vector<HourlyRecord> h;
    for (int k = 0; k < 24; ++k) h.push_back({Date(2020, 7, 1), k, 10.0, 5.0, 50.0, 2.0, 0.0, 101.0});
    const auto d = aggregate_hourly_to_daily(h);
    REQUIRE(d.size() == 1);
    CHECK(*d[0].t_max == 10.0);
    CHECK(*d[0].t_min == 10.0);
    CHECK(*d[0].t_avg == 10.0);
  }

  TEST_CASE("three hourly temperatures give max, min and mean") {
    std::vector<HourlyRecord> h;
    for (double t : {5.0, 15.0, 25.0}) h.push_back({Date(2020, 7, 1), static_cast<int>(t), t});
    const auto d = aggregate_hourly_to_daily(h, 0.0);
    REQUIRE(d.size() == 1);
    CHECK(*d[0].t_max == 25.0);
    CHECK(*d[0].t_min == 5.0);
    CHECK(*d[0].t_avg == 15.0);
  }

  TEST_CASE("sparse hours fall under the completeness threshold") {
    std::vector<HourlyRecord> h;
    for (int k : {3, 9, 15}) h.push_back({Date(2020, 7, 1), k, 20.0});
    const auto d = aggregate_hourly_to_daily(h, 0.5);
    REQUIRE(d.size() == 1);
    CHECK_FALSE(d[0].t_max.has_value());
    CHECK_FALSE(d[0].complete());
  }

  TEST_CASE("hourly csv round trip through the parser") {
    const auto dir = fixture::temp_dir("ingest_hourly");
    std::string text = "station_id,timestamp,temp,t_dew,rh,wind,precip,pressure\n";
    for (int k = 23; k >= 0; --k)
      text += "H1,2020-07-01T" + std::string(k < 10 ? "0" : "") + std::to_string(k) + ":00," +
              std::to_string(10 + k) + ",5,50,2,0.1,101\n";
    write(dir / "H1.csv", text);
    std::string id;
    const auto h = parse_hourly_csv(dir / "H1.csv", &id);
    CHECK(id == "H1");
    REQUIRE(h.size() == 24);
    CHECK(h.front().hour == 0);
    const auto d = aggregate_hourly_to_daily(h);
    CHECK(*d[0].t_max == 33.0);
    CHECK(*d[0].t_min == 10.0);
    CHECK(*d[0].precip == doctest::Approx(2.4).epsilon(1e-12));
  }

  TEST_CASE("one-day gap is linearly interpolated") {
    StationSeries s;
    s.records = {full_day(Date(2020, 7, 1), 10), full_day(Date(2020, 7, 3), 12)};
    const auto out = impute_missing(s);
    REQUIRE(out.records.size() == 3);
    CHECK(*out.records[1].t_avg == doctest::Approx(11.0).epsilon(1e-15));
    CHECK(out.records[1].complete());
  }

  TEST_CASE("gap longer than the limit raises when dropping is disallowed") {
    StationSeries s;
    s.records = {full_day(Date(2020, 7, 1), 10), full_day(Date(2020, 7, 7), 12)};
    ImputePolicy p;
    p.max_gap_days = 3;
    p.allow_drop = false;
    CHECK(kind_of([&] { impute_missing(s, p); }) == ErrorKind::GapTooLarge);
    p.allow_drop = true;
    const auto dropped = impute_missing(s, p);
    CHECK(dropped.records.size() == 2);
  }

  TEST_CASE("gap-free series is unchanged by imputation") {
    StationSeries s;
    for (int d = 0; d < 10; ++d) s.records.push_back(full_day(Date(2020, 7, 1) + d, 10 + d));
    CHECK(impute_missing(s).records == s.records);
  }

  TEST_CASE("interpolated values keep the record invariants") {
    StationSeries s;
    s.records = {full_day(Date(2020, 7, 1), 10), full_day(Date(2020, 7, 4), 25)};
    for (const auto& r : impute_missing(s).records) CHECK(validate_record(r).empty());
  }

  TEST_CASE("data directory round trip") {
    StationData data;
    for (int k = 0; k < 3; ++k) {
      StationSeries s;
      s.meta = {"D" + std::to_string(k), -120.0 + k, 50.0 + k, "Station " + std::to_string(k)};
      for (int d = 0; d < 5; ++d) s.records.push_back(full_day(Date(2019, 1, 1) + d, k + d));
      data.stations.push_back(s);
    }
    const auto dir = fixture::temp_dir("ingest_dir");
    write_data_dir(data, dir);
    const auto back = load_data_dir(dir);
    REQUIRE(back.stations.size() == 3);
    for (int k = 0; k < 3; ++k) {
      CHECK(back.stations[k].meta.station_id == data.stations[k].meta.station_id);
      CHECK(back.stations[k].meta.lat == data.stations[k].meta.lat);
      CHECK(back.stations[k].records == data.stations[k].records);
    }
  }
}
