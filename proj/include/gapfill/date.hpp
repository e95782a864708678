#pragma once

#include <compare>
#include <cstdio>
#include <string>

#include "gapfill/errors.hpp"

namespace gapfill {

/// Calendar date (proleptic Gregorian). Arithmetic goes through the
/// days-since-epoch serial so frame indexing stays O(1).
struct Date {
  int year = 1970;
  int month = 1;
  int day = 1;

  auto operator<=>(const Date&) const = default;
};

// Howard Hinnant's civil-from-days algorithms; epoch 1970-01-01 = 0.
inline long days_from_civil(const Date& d) {
  int y = d.year - (d.month <= 2);
  const long era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy =
      (153u * (d.month + (d.month > 2 ? -3 : 9)) + 2u) / 5u + d.day - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<long>(doe) - 719468;
}

inline Date civil_from_days(long z) {
  z += 719468;
  const long era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const long y = static_cast<long>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  const unsigned d = doy - (153 * mp + 2) / 5 + 1;
  const unsigned m = mp + (mp < 10 ? 3 : -9);
  return Date{static_cast<int>(y + (m <= 2)), static_cast<int>(m),
              static_cast<int>(d)};
}

inline Date add_days(const Date& d, long n) {
  return civil_from_days(days_from_civil(d) + n);
}

inline std::string format_date(const Date& d) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", d.year, d.month, d.day);
  return buf;
}

inline Date parse_date(const std::string& s) {
  Date d;
  if (std::sscanf(s.c_str(), "%d-%d-%d", &d.year, &d.month, &d.day) != 3 ||
      d.month < 1 || d.month > 12 || d.day < 1 || d.day > 31) {
    throw MalformedHeader("invalid date: " + s);
  }
  return d;
}

/// Closed interval [first, last] of calendar dates.
struct DateInterval {
  Date first;
  Date last;

  bool contains(const Date& d) const { return first <= d && d <= last; }
};

struct SplitSpec {
  DateInterval train;
  DateInterval valid;
  DateInterval test;
};

}  // namespace gapfill
