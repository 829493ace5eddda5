#include "memoir/context_manager.hpp"

#include "memoir/error.hpp"
#include "memoir/text.hpp"

namespace memoir {

namespace {

constexpr const char* kSummaryTemplate =
    "A doctor and a patient talked today and had the following conversation:\n"
    "====== Conversation Begin ======\n"
    "[Insert Conversation Here]\n"
    "====== Conversation End ======\n"
    "Summarize the interactions between the doctor and the patient so far. Include key details about both "
    "speakers.\n"
    "Output your summary only:";

constexpr const char* kPriorLabel = "Summary of the earlier conversations:";

constexpr const char* kResumeIntro =
    "You have talked to this person before and here is the summary of the previous conversations:";
constexpr const char* kResumeBegin = "====== Summary of Previous Conversation Begin ======";
constexpr const char* kResumeEnd = "====== Summary of Previous Conversation End ======";

}  // namespace

nlohmann::json to_json(const SessionSummary& s) {
  return {{"session_id", s.session_id},
          {"ordinal", s.ordinal},
          {"text", s.text},
          {"basis", s.basis == SummaryBasis::TranscriptOnly ? "transcript_only" : "transcript_plus_prior"},
          {"truncated", s.truncated}};
}

SessionSummary summary_from_json(const nlohmann::json& j) {
  SessionSummary s;
  s.session_id = j.at("session_id").get<std::string>();
  s.ordinal = j.at("ordinal").get<int>();
  s.text = j.at("text").get<std::string>();
  s.basis = j.at("basis").get<std::string>() == "transcript_only" ? SummaryBasis::TranscriptOnly
                                                                   : SummaryBasis::TranscriptPlusPrior;
  s.truncated = j.value("truncated", false);
  return s;
}

std::string summary_prompt(const Transcript& transcript, const std::optional<SessionSummary>& prior) {
  std::string conversation = format_transcript(transcript);
  if (prior) conversation = std::string(kPriorLabel) + "\n" + prior->text + "\n\n" + conversation;
  std::string prompt = kSummaryTemplate;
  text::replace_all(prompt, "[Insert Conversation Here]", conversation);
  return prompt;
}

CappedText cap_tokens_at_sentence(std::string_view input, std::size_t cap, const Tokenizer& tokenizer) {
  if (count_tokens(input, tokenizer) <= cap) return {std::string(input), false};
  std::string kept;
  for (const auto& sentence : text::split_sentences(input)) {
    std::string candidate = kept.empty() ? sentence : kept + " " + sentence;
    if (count_tokens(candidate, tokenizer) > cap) break;
    kept = std::move(candidate);
  }
  if (kept.empty()) kept = truncate_tokens(input, cap, tokenizer);
  return {kept, true};
}

SessionSummary summarize_session(const Transcript& transcript, const std::optional<SessionSummary>& prior,
                                 Gateway& gateway, const SummaryOptions& options) {
  if (transcript.empty()) throw Error(ErrorCode::InvalidRequest, "cannot summarize an empty transcript");
  const std::string reply = gateway.complete({{Role::User, summary_prompt(transcript, prior), 0}}, options.params,
                                             CallSite::Summarize, options.topic_id);
  const std::string body = text::trim(reply);
  if (body.empty()) throw Error(ErrorCode::EmptyModelReply, "summarizer returned an empty summary");

  const auto capped = cap_tokens_at_sentence(body, options.token_cap, gateway.tokenizer());
  SessionSummary s;
  s.session_id = options.session_id;
  s.ordinal = options.ordinal;
  s.text = capped.text;
  s.truncated = capped.truncated;
  s.basis = prior ? SummaryBasis::TranscriptPlusPrior : SummaryBasis::TranscriptOnly;
  return s;
}

std::optional<std::string> resume_context_text(std::string_view summary_text) {
  std::vector<std::string> kept;
  for (const auto& line : text::split_lines(summary_text)) {
    const std::string t = text::trim(line);
    if (t == kResumeIntro || t == kResumeBegin || t == kResumeEnd) continue;
    kept.push_back(line);
  }
  const std::string body = text::trim(text::join(kept, "\n"));
  if (body.empty()) return std::nullopt;
  return std::string(kResumeIntro) + "\n" + kResumeBegin + "\n" + body + "\n" + kResumeEnd;
}

std::optional<std::string> resume_context(const std::optional<SessionSummary>& latest) {
  if (!latest) return std::nullopt;
  return resume_context_text(latest->text);
}

}  // namespace memoir
