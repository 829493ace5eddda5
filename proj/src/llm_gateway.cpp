#include "memoir/llm_gateway.hpp"

#include <cctype>

#include "memoir/error.hpp"

namespace memoir {

std::string_view to_string(Role role) {
  switch (role) {
    case Role::System: return "system";
    case Role::Interviewer: return "interviewer";
    case Role::User: return "user";
  }
  return "user";
}

Role role_from_string(std::string_view name) {
  if (name == "system") return Role::System;
  if (name == "interviewer") return Role::Interviewer;
  if (name == "user") return Role::User;
  throw Error(ErrorCode::ParseError, "unknown role: " + std::string(name));
}

void validate_transcript(const Transcript& transcript) {
  for (std::size_t i = 0; i < transcript.size(); ++i) {
    const auto& m = transcript[i];
    if (m.role != Role::System && m.text.empty()) {
      throw Error(ErrorCode::InvalidRequest, "empty text at message " + std::to_string(i));
    }
    if (i > 0 && m.turn_index <= transcript[i - 1].turn_index) {
      throw Error(ErrorCode::InvalidRequest, "turn_index not increasing at message " + std::to_string(i));
    }
  }
}

std::string format_transcript(const Transcript& transcript) {
  std::string out;
  for (const auto& m : transcript) {
    if (m.role == Role::System) continue;
    if (!out.empty()) out.push_back('\n');
    out += m.role == Role::Interviewer ? "Interviewer: " : "User: ";
    out += m.text;
  }
  return out;
}

std::string_view to_string(CallSite tag) {
  switch (tag) {
    case CallSite::Reply: return "reply";
    case CallSite::Extract: return "extract";
    case CallSite::Extrapolate: return "extrapolate";
    case CallSite::Summarize: return "summarize";
    case CallSite::Judge: return "judge";
    case CallSite::Relevance: return "relevance";
    case CallSite::Emotion: return "emotion";
    case CallSite::Intensity: return "intensity";
    case CallSite::Proxy: return "proxy";
    case CallSite::PersonaSummary: return "persona_summary";
    case CallSite::GroundTruth: return "ground_truth";
    case CallSite::Chapter: return "chapter";
    case CallSite::Topic: return "topic";
  }
  return "reply";
}

std::optional<CallSite> call_site_from_string(std::string_view name) {
  static constexpr CallSite all[] = {
      CallSite::Reply,     CallSite::Extract,   CallSite::Extrapolate,    CallSite::Summarize,
      CallSite::Judge,     CallSite::Relevance, CallSite::Emotion,        CallSite::Intensity,
      CallSite::Proxy,     CallSite::PersonaSummary, CallSite::GroundTruth, CallSite::Chapter,
      CallSite::Topic,
  };
  for (CallSite c : all) {
    if (to_string(c) == name) return c;
  }
  return std::nullopt;
}

const std::string& CompletionRequest::key_text() const {
  static const std::string empty;
  for (auto it = messages.rbegin(); it != messages.rend(); ++it) {
    if (it->role != Role::System) return it->text;
  }
  return messages.empty() ? empty : messages.back().text;
}

std::vector<TokenSpan> DefaultTokenizer::tokenize(std::string_view text) const {
  std::vector<TokenSpan> spans;
  auto is_word = [](unsigned char c) { return std::isalnum(c) != 0 || c >= 0x80; };
  std::size_t i = 0;
  while (i < text.size()) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (std::isspace(c)) {
      ++i;
      continue;
    }
    if (is_word(c)) {
      std::size_t j = i + 1;
      while (j < text.size() && is_word(static_cast<unsigned char>(text[j]))) ++j;
      spans.push_back({i, j});
      i = j;
    } else {
      spans.push_back({i, i + 1});
      ++i;
    }
  }
  return spans;
}

const Tokenizer& default_tokenizer() {
  static const DefaultTokenizer instance;
  return instance;
}

std::size_t count_tokens(std::string_view text, const Tokenizer& tokenizer) {
  return tokenizer.tokenize(text).size();
}

std::string truncate_tokens(std::string_view text, std::size_t max_tokens, const Tokenizer& tokenizer) {
  const auto spans = tokenizer.tokenize(text);
  if (spans.size() <= max_tokens) return std::string(text);
  if (max_tokens == 0) return {};
  return std::string(text.substr(0, spans[max_tokens - 1].end));
}

class Gateway::Slot {
 public:
  explicit Slot(Gateway& g) : g_(g) { g_.acquire(); }
  ~Slot() { g_.release(); }
  Slot(const Slot&) = delete;
  Slot& operator=(const Slot&) = delete;

 private:
  Gateway& g_;
};

Gateway::Gateway(std::shared_ptr<Backend> backend, GatewayOptions options,
                 std::shared_ptr<const Tokenizer> tokenizer)
    : backend_(std::move(backend)), options_(options), tokenizer_(std::move(tokenizer)) {
  if (!backend_) throw Error(ErrorCode::InvalidRequest, "gateway requires a backend");
  if (!tokenizer_) tokenizer_ = std::make_shared<DefaultTokenizer>();
  if (options_.max_in_flight == 0) options_.max_in_flight = 1;
}

void Gateway::acquire() {
  std::unique_lock lock(mutex_);
  if (options_.call_budget && calls_ >= *options_.call_budget) {
    throw Error(ErrorCode::BudgetExceeded,
                "call budget of " + std::to_string(*options_.call_budget) + " exhausted");
  }
  ++calls_;
  slot_free_.wait(lock, [&] { return in_flight_ < options_.max_in_flight; });
  ++in_flight_;
}

void Gateway::release() {
  {
    std::lock_guard lock(mutex_);
    --in_flight_;
  }
  slot_free_.notify_one();
}

std::size_t Gateway::calls() const {
  std::lock_guard lock(mutex_);
  return calls_;
}

void Gateway::set_tap(Tap tap) {
  std::lock_guard lock(mutex_);
  tap_ = std::move(tap);
}

std::string Gateway::complete(const CompletionRequest& request) {
  if (request.messages.empty()) throw Error(ErrorCode::InvalidRequest, "messages must be non-empty");
  for (std::size_t i = 0; i < request.messages.size(); ++i) {
    const auto& m = request.messages[i];
    if (m.role == Role::System && i != 0) {
      throw Error(ErrorCode::InvalidRequest, "system message allowed only first");
    }
    if (m.role != Role::System && m.text.empty()) {
      throw Error(ErrorCode::InvalidRequest, "empty message text at " + std::to_string(i));
    }
  }
  if (request.params.max_new_tokens < 1) {
    throw Error(ErrorCode::InvalidRequest, "max_new_tokens must be >= 1");
  }

  std::string reply;
  {
    Slot slot(*this);
    reply = backend_->complete(request);
  }
  reply = truncate_tokens(reply, static_cast<std::size_t>(request.params.max_new_tokens), *tokenizer_);

  Tap tap;
  {
    std::lock_guard lock(mutex_);
    tap = tap_;
  }
  if (tap) tap(request, reply);
  return reply;
}

std::string Gateway::complete(std::vector<ChatMessage> messages, const GenerationParams& params,
                              CallSite tag, std::string topic_id) {
  CompletionRequest request;
  request.messages = std::move(messages);
  request.params = params;
  request.tag = tag;
  request.topic_id = std::move(topic_id);
  return complete(request);
}

EmbeddingVector Gateway::embed(std::string_view text) {
  if (text.empty()) throw Error(ErrorCode::EmptyText, "cannot embed empty text");
  EmbeddingVector v;
  {
    Slot slot(*this);
    v = backend_->embed(text);
  }
  if (static_cast<std::size_t>(v.dimension()) != backend_->dimension()) {
    throw Error(ErrorCode::InvalidRequest, "embedding dimension mismatch from " + backend_->name());
  }
  if (!v.values.allFinite()) throw Error(ErrorCode::InvalidRequest, "non-finite embedding");
  return v;
}

}  // namespace memoir
