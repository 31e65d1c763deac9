#pragma once

#include <chrono>
#include <compare>
#include <optional>
#include <string>
#include <string_view>

namespace tailcast {

// Calendar date in station-local standard time, stored as days since 1970-01-01.
class Date {
 public:
  constexpr Date() = default;
  constexpr explicit Date(int days_since_epoch) : days_(days_since_epoch) {}
  Date(int year, unsigned month, unsigned day);

  static std::optional<Date> parse(std::string_view iso);  // YYYY-MM-DD

  int days() const noexcept { return days_; }
  int year() const;
  unsigned month() const;
  unsigned day() const;
  // Zero-based day of year (Jan 1 -> 0).
  int day_of_year() const;
  // May 1 .. Sep 30 inclusive.
  bool is_summer() const;
  std::string iso() const;

  Date operator+(int n) const noexcept { return Date(days_ + n); }
  Date operator-(int n) const noexcept { return Date(days_ - n); }
  int operator-(Date other) const noexcept { return days_ - other.days_; }
  Date& operator++() noexcept { ++days_; return *this; }

  auto operator<=>(const Date&) const = default;

 private:
  std::chrono::year_month_day ymd() const;
  int days_ = 0;
};

}  // namespace tailcast
