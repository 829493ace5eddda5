#pragma once

#include <Eigen/Dense>

#include <condition_variable>
#include <cstddef>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace memoir {

enum class Role { System, Interviewer, User };

std::string_view to_string(Role role);
Role role_from_string(std::string_view name);

struct ChatMessage {
  Role role = Role::User;
  std::string text;
  int turn_index = 0;

  bool operator==(const ChatMessage&) const = default;
};

using Transcript = std::vector<ChatMessage>;

// Throws InvalidRequest when user/interviewer text is empty or turn indexes
// are not strictly increasing.
void validate_transcript(const Transcript& transcript);

// "Interviewer: ...\nUser: ..." rendering used inside prompts.
std::string format_transcript(const Transcript& transcript);

struct GenerationParams {
  int max_new_tokens = 1024;
  int num_generations = 1;
  std::optional<double> temperature;  // backend default when absent
};

// Distinguishes call sites so one scripted fixture can drive a whole run.
enum class CallSite {
  Reply,
  Extract,
  Extrapolate,
  Summarize,
  Judge,
  Relevance,
  Emotion,
  Intensity,
  Proxy,
  PersonaSummary,
  GroundTruth,
  Chapter,
  Topic,
};

std::string_view to_string(CallSite tag);
std::optional<CallSite> call_site_from_string(std::string_view name);

// Whose voice the model speaks in. Remote backends map roles accordingly.
enum class Perspective { Interviewer, User };

struct CompletionRequest {
  std::vector<ChatMessage> messages;
  GenerationParams params;
  CallSite tag = CallSite::Reply;
  std::string topic_id;
  Perspective perspective = Perspective::Interviewer;

  // Text of the last non-system message; the mock backend keys on it.
  const std::string& key_text() const;
};

struct EmbeddingVector {
  Eigen::VectorXd values;

  Eigen::Index dimension() const { return values.size(); }
};

template <typename DerivedA, typename DerivedB>
double cosine(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) {
  const double denom = a.norm() * b.norm();
  if (denom == 0.0) return 0.0;
  return a.dot(b) / denom;
}

inline double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
  return cosine(a.values, b.values);
}

struct TokenSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
};

class Tokenizer {
 public:
  virtual ~Tokenizer() = default;
  virtual std::vector<TokenSpan> tokenize(std::string_view text) const = 0;
  virtual std::string name() const = 0;
};

// Word runs (ASCII alphanumerics plus any non-ASCII byte) are one token each;
// every other non-space character is a token of its own.
class DefaultTokenizer final : public Tokenizer {
 public:
  std::vector<TokenSpan> tokenize(std::string_view text) const override;
  std::string name() const override { return "default-word-punct"; }
};

const Tokenizer& default_tokenizer();

std::size_t count_tokens(std::string_view text, const Tokenizer& tokenizer = default_tokenizer());

// Prefix of `text` ending at the last character of token `max_tokens`.
std::string truncate_tokens(std::string_view text, std::size_t max_tokens,
                            const Tokenizer& tokenizer = default_tokenizer());

class Backend {
 public:
  virtual ~Backend() = default;
  virtual std::string complete(const CompletionRequest& request) = 0;
  virtual EmbeddingVector embed(std::string_view text) = 0;
  virtual std::size_t dimension() const = 0;
  virtual std::string name() const = 0;
};

struct GatewayOptions {
  std::size_t max_in_flight = 4;
  std::optional<std::size_t> call_budget;
};

// Uniform front door over one backend: request validation, in-flight limit,
// call budget and max_new_tokens enforcement.
class Gateway {
 public:
  using Tap = std::function<void(const CompletionRequest&, const std::string&)>;

  explicit Gateway(std::shared_ptr<Backend> backend, GatewayOptions options = {},
                   std::shared_ptr<const Tokenizer> tokenizer = nullptr);

  std::string complete(const CompletionRequest& request);
  std::string complete(std::vector<ChatMessage> messages, const GenerationParams& params,
                       CallSite tag, std::string topic_id = {});

  EmbeddingVector embed(std::string_view text);

  const Tokenizer& tokenizer() const { return *tokenizer_; }
  Backend& backend() { return *backend_; }
  std::size_t calls() const;

  // Observes every completed request (tests capture prompts through this).
  void set_tap(Tap tap);

 private:
  class Slot;

  void acquire();
  void release();

  std::shared_ptr<Backend> backend_;
  GatewayOptions options_;
  std::shared_ptr<const Tokenizer> tokenizer_;

  mutable std::mutex mutex_;
  std::condition_variable slot_free_;
  std::size_t in_flight_ = 0;
  std::size_t calls_ = 0;
  Tap tap_;
};

}  // namespace memoir
