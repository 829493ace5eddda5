#pragma once

#include <nlohmann/json.hpp>

#include <optional>
#include <string>

#include "memoir/llm_gateway.hpp"

namespace memoir {

enum class SummaryBasis { TranscriptOnly, TranscriptPlusPrior };

struct SessionSummary {
  std::string session_id;
  int ordinal = 0;
  std::string text;
  SummaryBasis basis = SummaryBasis::TranscriptOnly;
  bool truncated = false;

  bool operator==(const SessionSummary&) const = default;
};

nlohmann::json to_json(const SessionSummary& s);
SessionSummary summary_from_json(const nlohmann::json& j);

struct SummaryOptions {
  std::string session_id;
  int ordinal = 1;
  std::size_t token_cap = 512;
  GenerationParams params;
  std::string topic_id;
};

std::string summary_prompt(const Transcript& transcript, const std::optional<SessionSummary>& prior);

// Longest sentence prefix within `cap` tokens (hard token cut if the first
// sentence alone is longer).
struct CappedText {
  std::string text;
  bool truncated = false;
};
CappedText cap_tokens_at_sentence(std::string_view text, std::size_t cap, const Tokenizer& tokenizer);

SessionSummary summarize_session(const Transcript& transcript, const std::optional<SessionSummary>& prior,
                                 Gateway& gateway, const SummaryOptions& options);

// Prior-conversation section for the next session's system prompt.
std::optional<std::string> resume_context(const std::optional<SessionSummary>& latest);
std::optional<std::string> resume_context_text(std::string_view summary_text);

}  // namespace memoir
