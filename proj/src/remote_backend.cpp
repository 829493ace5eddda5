#include "memoir/remote_backend.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <thread>

#include "memoir/error.hpp"

namespace memoir {

namespace {

std::string map_role(Role role, Perspective perspective) {
  if (role == Role::System) return "system";
  const bool speaker_is_model =
      (perspective == Perspective::Interviewer) == (role == Role::Interviewer);
  return speaker_is_model ? "assistant" : "user";
}

}  // namespace

RemoteBackend::RemoteBackend(RemoteBackendConfig config)
    : config_(std::move(config)), dimension_(config_.dimension) {
  const auto scheme_end = config_.endpoint.find("://");
  if (scheme_end == std::string::npos) {
    throw Error(ErrorCode::InvalidRequest, "endpoint must include a scheme: " + config_.endpoint);
  }
  const auto path_start = config_.endpoint.find('/', scheme_end + 3);
  origin_ = config_.endpoint.substr(0, path_start);
  base_path_ = path_start == std::string::npos ? "" : config_.endpoint.substr(path_start);
  while (!base_path_.empty() && base_path_.back() == '/') base_path_.pop_back();
}

std::string RemoteBackend::post_json(const std::string& path, const std::string& body) {
  httplib::Client client(origin_);
  client.set_connection_timeout(config_.timeout);
  client.set_read_timeout(config_.timeout);
  client.set_write_timeout(config_.timeout);
  httplib::Headers headers;
  if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);

  std::string last_error;
  auto backoff = config_.initial_backoff;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
    auto res = client.Post(base_path_ + path, headers, body, "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;
    }
    if (res->status == 429 || res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status >= 400) {
      throw Error(ErrorCode::InvalidRequest,
                  "HTTP " + std::to_string(res->status) + " from " + origin_ + ": " + res->body);
    }
    return res->body;
  }
  throw Error(ErrorCode::BackendUnreachable,
              origin_ + base_path_ + path + " failed after " + std::to_string(config_.max_retries + 1) +
                  " attempts: " + last_error);
}

std::string RemoteBackend::complete(const CompletionRequest& request) {
  nlohmann::json body;
  body["model"] = config_.model;
  body["max_tokens"] = request.params.max_new_tokens;
  body["n"] = request.params.num_generations;
  if (request.params.temperature) body["temperature"] = *request.params.temperature;
  auto& messages = body["messages"] = nlohmann::json::array();
  for (const auto& m : request.messages) {
    messages.push_back({{"role", map_role(m.role, request.perspective)}, {"content", m.text}});
  }
  const std::string raw = post_json("/chat/completions", body.dump());
  try {
    const auto doc = nlohmann::json::parse(raw);
    return doc.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::BackendUnreachable, std::string("malformed completion response: ") + e.what());
  }
}

EmbeddingVector RemoteBackend::embed(std::string_view input) {
  if (input.empty()) throw Error(ErrorCode::EmptyText, "cannot embed empty text");
  nlohmann::json body{{"model", config_.embedding_model.empty() ? config_.model : config_.embedding_model},
                      {"input", std::string(input)}};
  const std::string raw = post_json("/embeddings", body.dump());
  std::vector<double> values;
  try {
    values = nlohmann::json::parse(raw).at("data").at(0).at("embedding").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::BackendUnreachable, std::string("malformed embedding response: ") + e.what());
  }
  std::size_t expected = 0;
  dimension_.compare_exchange_strong(expected, values.size());
  EmbeddingVector v;
  v.values = Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
  return v;
}

}  // namespace memoir
