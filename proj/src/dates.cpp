#include "memoir/dates.hpp"

#include <array>
#include <cctype>
#include <cstdio>

#include "memoir/text.hpp"

namespace memoir {

namespace {

struct Word {
  std::string lower;
  std::size_t begin;
  std::size_t end;
};

std::vector<Word> words_of(std::string_view s) {
  std::vector<Word> out;
  std::size_t i = 0;
  while (i < s.size()) {
    if (!std::isalnum(static_cast<unsigned char>(s[i]))) {
      ++i;
      continue;
    }
    const std::size_t b = i;
    while (i < s.size() && std::isalnum(static_cast<unsigned char>(s[i]))) ++i;
    out.push_back({text::to_lower(s.substr(b, i - b)), b, i});
  }
  return out;
}

bool all_digits(const std::string& w) {
  if (w.empty()) return false;
  for (char c : w) {
    if (!std::isdigit(static_cast<unsigned char>(c))) return false;
  }
  return true;
}

bool is_year(const std::string& w) {
  if (w.size() != 4 || !all_digits(w)) return false;
  return w[0] == '1' || (w[0] == '2' && w[1] == '0');
}

std::optional<int> month_of(const std::string& w) {
  static constexpr std::array<std::string_view, 12> names{
      "january", "february", "march",     "april",   "may",      "june",
      "july",    "august",   "september", "october", "november", "december"};
  for (std::size_t m = 0; m < names.size(); ++m) {
    if (w == names[m]) return static_cast<int>(m) + 1;
    // Three-letter abbreviations, plus "sept". "may" is covered above.
    if (w.size() >= 3 && w.size() < names[m].size() && names[m].starts_with(w) &&
        (w.size() == 3 || w == "sept")) {
      return static_cast<int>(m) + 1;
    }
  }
  return std::nullopt;
}

std::optional<int> day_of(const std::string& w) {
  std::string digits = w;
  for (std::string_view suffix : {"st", "nd", "rd", "th"}) {
    if (digits.size() > suffix.size() && digits.ends_with(suffix)) {
      digits.resize(digits.size() - suffix.size());
      break;
    }
  }
  if (digits.empty() || digits.size() > 2 || !all_digits(digits)) return std::nullopt;
  const int d = std::stoi(digits);
  if (d < 1 || d > 31) return std::nullopt;
  return d;
}

std::optional<std::string> qualifier_of(const std::string& w) {
  if (w == "early") return "early";
  if (w == "mid" || w == "middle") return "mid";
  if (w == "late") return "late";
  return std::nullopt;
}

// "YYYY-MM" or "YYYY-MM-DD" directly after the year token.
bool read_iso_suffix(std::string_view s, std::size_t pos, DateKey& key) {
  auto two_digits = [&](std::size_t at) -> std::optional<int> {
    if (at + 2 > s.size()) return std::nullopt;
    if (!std::isdigit(static_cast<unsigned char>(s[at])) || !std::isdigit(static_cast<unsigned char>(s[at + 1]))) {
      return std::nullopt;
    }
    if (at + 2 < s.size() && std::isdigit(static_cast<unsigned char>(s[at + 2]))) return std::nullopt;
    return (s[at] - '0') * 10 + (s[at + 1] - '0');
  };
  if (pos >= s.size() || s[pos] != '-') return false;
  const auto month = two_digits(pos + 1);
  if (!month || *month < 1 || *month > 12) return false;
  key.month = month;
  if (pos + 3 < s.size() && s[pos + 3] == '-') {
    const auto day = two_digits(pos + 4);
    if (day && *day >= 1 && *day <= 31) key.day = day;
  }
  return true;
}

}  // namespace

std::string DateKey::str() const {
  char buf[32];
  if (month && day) {
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", year, *month, *day);
  } else if (month) {
    std::snprintf(buf, sizeof buf, "%04d-%02d", year, *month);
  } else if (qualifier) {
    return std::to_string(year) + "-" + *qualifier;
  } else {
    std::snprintf(buf, sizeof buf, "%04d", year);
  }
  return buf;
}

std::vector<DateMatch> find_dates(std::string_view s) {
  const auto words = words_of(s);
  std::vector<DateMatch> out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (!is_year(words[i].lower)) continue;
    DateKey key;
    key.year = std::stoi(words[i].lower);

    if (!read_iso_suffix(s, words[i].end, key)) {
      // "March 12, 1995" / "12 March 1995" / "March 1995"
      if (i >= 1) {
        if (auto m = month_of(words[i - 1].lower)) {
          key.month = m;
          if (i >= 2) key.day = day_of(words[i - 2].lower);
        } else if (i >= 2 && day_of(words[i - 1].lower)) {
          if (auto m2 = month_of(words[i - 2].lower)) {
            key.month = m2;
            key.day = day_of(words[i - 1].lower);
          }
        }
      }
      if (!key.month) {
        if (i >= 1) key.qualifier = qualifier_of(words[i - 1].lower);
        if (!key.qualifier && i + 1 < words.size()) key.qualifier = qualifier_of(words[i + 1].lower);
      }
    }
    out.push_back({std::move(key), words[i].begin, words[i].end});
  }
  return out;
}

std::optional<DateKey> normalize_date(std::string_view raw) {
  auto found = find_dates(raw);
  if (found.empty()) return std::nullopt;
  return std::move(found.front().key);
}

std::string date_key_of(std::string_view raw) {
  const auto key = normalize_date(raw);
  return key ? key->str() : std::string{};
}

}  // namespace memoir
