#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "memoir/empathy.hpp"
#include "memoir/evaluation.hpp"
#include "memoir/interview_engine.hpp"
#include "memoir/llm_gateway.hpp"
#include "memoir/remote_backend.hpp"
#include "memoir/user_proxy.hpp"

namespace memoir {

struct BackendSpec {
  std::string kind = "mock";  // mock | remote
  std::filesystem::path mock_script;
  RemoteBackendConfig remote;
  GatewayOptions options;
};

struct DetectorSpec {
  std::string kind = "gateway";  // gateway | scripted | none
  std::filesystem::path script;
};

struct PersonaSource {
  std::string id;
  std::filesystem::path path;  // the subject's autobiography text
};

struct EvaluationOptions {
  std::vector<std::filesystem::path> records;    // our interview records
  std::vector<std::filesystem::path> opponents;  // baseline records for pairwise judging
  std::vector<std::filesystem::path> empathy_off;  // records without empathy, for the emotion comparison
  std::optional<std::filesystem::path> metrics_fixture;
  std::optional<std::filesystem::path> round_annotations;
  std::vector<JudgeDimension> dimensions{kAllDimensions.begin(), kAllDimensions.end()};
  bool correctness = true;
};

struct ServiceOptions {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::size_t max_interviews = 16;
  std::filesystem::path state_dir;  // empty: in-memory only
  std::string token;                // empty: no auth
  int long_poll_ms = 25000;
};

struct RunConfig {
  std::filesystem::path source;
  BackendSpec gateway;
  std::optional<BackendSpec> judge_gateway;
  std::optional<BackendSpec> proxy_gateway;
  DetectorSpec detector;
  EngineConfig engine;
  std::filesystem::path protocol_path;
  std::vector<PersonaSource> personas;
  PersonaOptions persona;
  EvaluationOptions evaluation;
  std::filesystem::path output_dir = "out";
  std::uint64_t seed = 0;
  int parallel = 1;
  bool generate_book = true;
  ServiceOptions service;
};

// Replaces ${NAME} with the environment value; throws ValidationError naming
// `field` when the variable is unset.
std::string interpolate_env(const std::string& value, const std::string& field);

// Throws ValidationError with a dotted field path (e.g. engine.round_limit).
EngineConfig parse_engine_config(const nlohmann::json& doc, const std::string& prefix = "engine");
nlohmann::json engine_config_json(const EngineConfig& cfg);

// Relative paths resolve against `base_dir`; referenced files must exist.
RunConfig parse_config(const nlohmann::json& doc, const std::filesystem::path& base_dir);

// Throws ParseError for unreadable or malformed files, ValidationError otherwise.
RunConfig load_config(const std::filesystem::path& path);

// Effective configuration with secrets removed; embedded in artifacts.
nlohmann::json config_snapshot(const RunConfig& cfg);

std::shared_ptr<Backend> make_backend(const BackendSpec& spec, std::uint64_t seed);
std::shared_ptr<Gateway> make_gateway(const BackendSpec& spec, std::uint64_t seed);

// nullptr for kind "none".
std::shared_ptr<EmotionDetector> make_detector(const DetectorSpec& spec, std::shared_ptr<Gateway> gateway);

}  // namespace memoir
