#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace memoir {

// Comparable date key: year, optional month and day, or a coarse qualifier
// ("early", "mid", "late") when no month is given.
struct DateKey {
  int year = 0;
  std::optional<int> month;
  std::optional<int> day;
  std::optional<std::string> qualifier;

  // "1980", "1980-early", "1995-03", "1995-03-12".
  std::string str() const;

  bool operator==(const DateKey&) const = default;
};

struct DateMatch {
  DateKey key;
  std::size_t begin = 0;  // byte span of the year token
  std::size_t end = 0;
};

// Every year mention in `text`, with month/day/qualifier taken from the
// neighbouring words. Years are 1000-1999 or 2000-2099.
std::vector<DateMatch> find_dates(std::string_view text);

// First date in `raw`, nullopt when undated.
std::optional<DateKey> normalize_date(std::string_view raw);

// Key string for `raw`, empty when undated.
std::string date_key_of(std::string_view raw);

}  // namespace memoir
