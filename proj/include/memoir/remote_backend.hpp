#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <string>

#include "memoir/llm_gateway.hpp"

namespace memoir {

struct RemoteBackendConfig {
  std::string endpoint;  // base URL, e.g. http://localhost:8000/v1
  std::string model;
  std::string embedding_model;
  std::string api_key;  // resolved from the configured env var by the caller
  std::size_t dimension = 0;  // 0: learned from the first embedding response
  int max_retries = 2;
  std::chrono::milliseconds initial_backoff{250};
  std::chrono::seconds timeout{120};
};

// OpenAI-compatible chat-completions and embeddings client.
// Transport failures and 5xx/429 responses are retried with exponential
// backoff, at most `max_retries` times, then reported as backend-unreachable.
class RemoteBackend final : public Backend {
 public:
  explicit RemoteBackend(RemoteBackendConfig config);

  std::string complete(const CompletionRequest& request) override;
  EmbeddingVector embed(std::string_view text) override;
  std::size_t dimension() const override { return dimension_.load(); }
  std::string name() const override { return "remote:" + config_.model; }

 private:
  std::string post_json(const std::string& path, const std::string& body);

  RemoteBackendConfig config_;
  std::string origin_;  // scheme://host[:port]
  std::string base_path_;
  std::atomic<std::size_t> dimension_{0};
};

}  // namespace memoir
