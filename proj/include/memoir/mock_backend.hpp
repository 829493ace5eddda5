#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include "memoir/llm_gateway.hpp"

namespace memoir {

// One scripted response rule. Rules are tried in file order; the first rule
// whose tag, topic and pattern all match produces the reply.
//
// Reply templates may reference {{1}}..{{9}} (regex captures), {{topic}},
// {{tag}}, {{digest}} and {{key}} (the full key text).
struct MockRule {
  enum class Match { Any, Exact, Contains, Regex };

  std::optional<CallSite> tag;  // nullopt matches every call site
  std::optional<std::string> topic;
  Match match = Match::Any;
  std::string pattern;
  std::vector<std::string> replies;

  std::optional<std::regex> compiled;
};

struct MockScript {
  std::vector<MockRule> rules;
  // Per-tag fallback replies used when no rule matches; key "*" covers all tags.
  std::vector<std::pair<std::string, std::vector<std::string>>> fallbacks;
  std::size_t dimension = 64;
  std::uint64_t embedding_seed = 17;
  std::uint64_t seed = 0;

  static MockScript from_json(const nlohmann::json& doc);
  static MockScript load(const std::filesystem::path& path);
};

// Deterministic backend: every reply is a pure function of the script, the
// request (tag, topic, key text) and the seed.
class MockBackend final : public Backend {
 public:
  explicit MockBackend(MockScript script);

  std::string complete(const CompletionRequest& request) override;
  EmbeddingVector embed(std::string_view text) override;
  std::size_t dimension() const override { return script_.dimension; }
  std::string name() const override { return "mock"; }

  void set_seed(std::uint64_t seed) { script_.seed = seed; }
  const MockScript& script() const { return script_; }

 private:
  MockScript script_;
};

// Signed feature hashing of lowercase word tokens, L2-normalized.
Eigen::VectorXd hashed_bag_of_words(std::string_view text, std::size_t dimension, std::uint64_t seed);

}  // namespace memoir
