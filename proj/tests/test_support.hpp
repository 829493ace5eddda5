#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "memoir/llm_gateway.hpp"
#include "memoir/mock_backend.hpp"

namespace memoir::testkit {

inline std::filesystem::path fixture_dir() { return MEMOIR_FIXTURE_DIR; }
inline std::filesystem::path data_dir() { return MEMOIR_DATA_DIR; }

// Seeded generator for property tests.
class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  int uniform(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  double real(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  bool coin(double p = 0.5) { return std::bernoulli_distribution(p)(rng_); }

  template <typename T>
  const T& pick(const std::vector<T>& items) {
    return items[static_cast<std::size_t>(uniform(0, static_cast<int>(items.size()) - 1))];
  }

  std::string word(int min_len = 1, int max_len = 8) {
    std::string w;
    const int n = uniform(min_len, max_len);
    for (int i = 0; i < n; ++i) w.push_back(static_cast<char>('a' + uniform(0, 25)));
    return w;
  }

  std::string sentence(int min_words = 1, int max_words = 10) {
    std::string s;
    const int n = uniform(min_words, max_words);
    for (int i = 0; i < n; ++i) {
      if (i) s.push_back(' ');
      s += word();
    }
    return s;
  }

  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

inline std::shared_ptr<Gateway> mock_gateway(const nlohmann::json& script, GatewayOptions options = {}) {
  return std::make_shared<Gateway>(std::make_shared<MockBackend>(MockScript::from_json(script)), options);
}

// Removes the directory on scope exit.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("memoir-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace memoir::testkit
