#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace memoir::text {

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);

// Lowercase, collapse whitespace runs, strip surrounding punctuation.
std::string normalize(std::string_view s);

std::vector<std::string> split(std::string_view s, char sep);
std::vector<std::string> split_lines(std::string_view s);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

bool starts_with_ci(std::string_view s, std::string_view prefix);
bool contains_ci(std::string_view haystack, std::string_view needle);

void replace_all(std::string& s, std::string_view from, std::string_view to);

// 64-bit FNV-1a. Stable across platforms and process restarts.
std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);
std::string digest(std::string_view data);

struct SentenceTrim {
  std::string text;
  bool trimmed = false;
};

// Splits on '.', '!' or '?' followed by whitespace or end of text.
std::vector<std::string> split_sentences(std::string_view s);

// Keeps at most `max_sentences` leading sentences.
SentenceTrim trim_sentences(std::string_view s, std::size_t max_sentences);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);

}  // namespace memoir::text
