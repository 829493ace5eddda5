#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "memoir/interview_engine.hpp"
#include "memoir/llm_gateway.hpp"

namespace memoir {

struct ChunkingOptions {
  std::size_t size = 800;     // tokens
  std::size_t overlap = 100;  // tokens shared by consecutive chunks
};

struct PersonaOptions {
  ChunkingOptions chunking;
  double similarity_threshold = 0.67;
  int max_retrieve_loops = 1;
  std::size_t top_k = 4;
  std::size_t summary_source_tokens = 6000;
  std::size_t max_sentences = 5;
  GenerationParams params;
};

struct ProxyPersona {
  std::string persona_id;
  std::string source_digest;
  std::string experience_summary;
  std::vector<std::string> chunks;
  Eigen::MatrixXd embeddings;  // one row per chunk, unit-normalized
  double similarity_threshold = 0.67;
  int max_retrieve_loops = 1;
  std::size_t top_k = 4;
  std::size_t max_sentences = 5;

  nlohmann::json to_json() const;
  static ProxyPersona from_json(const nlohmann::json& doc);
};

// Number of chunks produced for `n_tokens` tokens.
std::size_t chunk_count(std::size_t n_tokens, const ChunkingOptions& opts);

// Token-window chunks; each chunk is the exact source substring it covers.
std::vector<std::string> chunk_text(std::string_view text, const ChunkingOptions& opts, const Tokenizer& tokenizer);

std::string persona_summary_prompt(std::string_view excerpt);

ProxyPersona build_persona(const std::string& persona_id, std::string_view source_text, Gateway& gateway,
                           const PersonaOptions& options = {});

// Reuses `<cache_dir>/<persona_id>-<digest>.json` when present.
ProxyPersona load_or_build_persona(const std::string& persona_id, std::string_view source_text, Gateway& gateway,
                                   const PersonaOptions& options, const std::filesystem::path& cache_dir);

struct RetrieveCommand {
  std::string query;
};

inline constexpr const char* kRetrieveMarker = "<RETRIEVE>";

// nullopt when the marker is absent; throws EmptyRetrieveQuery when the
// marker carries no query.
std::optional<RetrieveCommand> parse_retrieve(std::string_view text);

struct RetrievedChunk {
  std::size_t index = 0;
  std::string text;
  double similarity = 0.0;
};

std::vector<RetrievedChunk> retrieve(const ProxyPersona& persona, const std::string& query, Gateway& gateway);

std::string user_system_prompt(const ProxyPersona& persona);
std::string user_instructional_prompt(const std::vector<RetrievedChunk>& docs);

struct ProxyReply {
  ChatMessage message;
  int model_calls = 0;
  int retrieve_loops = 0;
  bool sentence_trimmed = false;
  bool forced_direct = false;
};

ProxyReply proxy_respond(const ProxyPersona& persona, const ChatMessage& interviewer, const Transcript& transcript,
                         Gateway& gateway, const GenerationParams& params = {}, const std::string& topic_id = {});

// The proxy as a UserChannel for simulated interviews.
class ProxyChannel final : public UserChannel {
 public:
  ProxyChannel(std::shared_ptr<const ProxyPersona> persona, std::shared_ptr<Gateway> gateway,
               GenerationParams params = {});

  std::optional<std::string> respond(const ChatMessage& interviewer, const Transcript& transcript,
                                     const std::string& topic_id) override;

  int model_calls() const { return calls_; }

 private:
  std::shared_ptr<const ProxyPersona> persona_;
  std::shared_ptr<Gateway> gateway_;
  GenerationParams params_;
  int calls_ = 0;
};

}  // namespace memoir
