#pragma once

#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "memoir/context_manager.hpp"
#include "memoir/empathy.hpp"
#include "memoir/llm_gateway.hpp"
#include "memoir/memory_graph.hpp"
#include "memoir/protocol.hpp"

namespace memoir {

enum class EngineMode { Guided, Baseline };

std::string_view to_string(EngineMode mode);
std::optional<EngineMode> engine_mode_from_string(std::string_view name);

struct RoundDynamics {
  int round = 0;
  int events_extracted = 0;
  int questions_extrapolated = 0;

  bool operator==(const RoundDynamics&) const = default;
};

struct SessionRecord {
  std::string session_id;
  int ordinal = 0;
  std::string topic_id;
  std::string system_prompt;
  Transcript transcript;
  std::vector<EmotionReading> emotion_readings;
  int rounds_used = 0;
  std::vector<RoundDynamics> dynamics;
  std::optional<SessionSummary> summary;
  std::optional<std::string> baseline_topic;  // model-chosen topic line (baseline mode)
  int extraction_warnings = 0;
  bool timed_out = false;

  bool operator==(const SessionRecord&) const = default;
};

struct EngineConfig {
  int round_limit = 10;
  int session_limit = 23;
  EngineMode mode = EngineMode::Guided;
  int extrapolation_period = 1;
  bool memory_enabled = true;
  bool empathy_enabled = true;
  StrategyConfig strategy;
  GenerationParams params;
  GenerationParams aux_params{1024, 1, {}};  // extraction, extrapolation, summaries
  std::size_t extraction_window = 3;
  std::size_t summary_token_cap = 512;
  std::optional<std::chrono::milliseconds> session_time_budget;

  // Throws InvalidConfig naming the offending field.
  void validate(std::size_t protocol_size) const;
};

struct InterviewRecord {
  std::string interview_id;
  std::string persona_id;
  std::uint64_t seed = 0;
  nlohmann::json config_snapshot = nlohmann::json::object();
  std::vector<SessionRecord> sessions;
  MemoryGraph graph;
  std::vector<SessionSummary> summaries;
  bool complete = false;
  std::optional<std::string> error;
};

// Where user turns come from. Returning nullopt closes the channel.
class UserChannel {
 public:
  virtual ~UserChannel() = default;
  virtual std::optional<std::string> respond(const ChatMessage& interviewer, const Transcript& transcript,
                                             const std::string& topic_id) = 0;
};

// Replays a fixed list of replies, then closes.
class ScriptedChannel final : public UserChannel {
 public:
  explicit ScriptedChannel(std::vector<std::string> replies) : replies_(std::move(replies)) {}
  std::optional<std::string> respond(const ChatMessage&, const Transcript&, const std::string&) override;

  std::size_t consumed() const { return next_; }

 private:
  std::vector<std::string> replies_;
  std::size_t next_ = 0;
};

// Line-oriented chat over streams; EOF or "/quit" closes.
class TerminalChannel final : public UserChannel {
 public:
  TerminalChannel(std::istream& in, std::ostream& out) : in_(in), out_(out) {}
  std::optional<std::string> respond(const ChatMessage& interviewer, const Transcript& transcript,
                                     const std::string& topic_id) override;

 private:
  std::istream& in_;
  std::ostream& out_;
};

class EngineObserver {
 public:
  virtual ~EngineObserver() = default;
  // `graph` stays valid and is only mutated on the engine thread until on_session_end.
  virtual void on_session_start(int /*ordinal*/, const std::string& /*topic_id*/, const MemoryGraph& /*graph*/) {}
  virtual void on_interviewer_turn(const SessionRecord& /*session*/, const ChatMessage& /*msg*/) {}
  virtual void on_user_turn(const SessionRecord& /*session*/, const ChatMessage& /*msg*/) {}
  virtual void on_session_end(const SessionRecord& /*session*/) {}
  virtual void on_summary(const SessionSummary& /*summary*/) {}
};

struct EngineDeps {
  std::shared_ptr<Gateway> gateway;
  std::shared_ptr<EmotionDetector> detector;  // optional
  EngineObserver* observer = nullptr;         // optional, not owned
};

enum class QuestionSlot { None, Seed, Cached, FollowUp };

struct SessionState {
  const Topic* topic = nullptr;
  std::string system_prompt;
  Transcript transcript;
  std::size_t next_seed = 0;
  QuestionSlot last_slot = QuestionSlot::None;
  std::string last_instruction;  // the instruction block sent with the latest turn
};

inline constexpr const char* kAskPrefix = "Ask the user the following question in your own words: ";
inline constexpr const char* kFollowUpDirective =
    "Ask the user one open follow-up question about what they have just shared.";
inline constexpr const char* kBaselineOpening = "Please start the interview.";
inline constexpr const char* kTopicPrompt =
    "Based on the previous conversation history and your role as a biographer, please state the topic you are "
    "about to discuss in this session.\nOutput the topic only in the format <topic>:";

// Instruction block: optional empathy directive, then exactly one question.
std::string compose_instruction(SessionState& state, MemoryGraph& graph, const EmotionReading* reading,
                                const EngineConfig& cfg);

ChatMessage compose_turn(SessionState& state, MemoryGraph& graph, const EmotionReading* reading,
                         const EngineConfig& cfg, Gateway& gateway);

std::string baseline_system_prompt(const std::optional<std::string>& resumed_context, const std::string& topic);
std::string parse_topic_line(std::string_view reply);

std::string session_id_for(int ordinal);

struct SessionInputs {
  SessionPlan plan;
  std::optional<SessionSummary> prior;
  std::optional<std::string> baseline_topic;
};

// Guided: protocol prompt with summary and strategy sections. Baseline: the
// topic pre-call, then the plain biographer prompt naming that topic.
SessionInputs plan_session(const EngineConfig& cfg, const InterviewProtocol& protocol, const std::string& topic_id,
                           int ordinal, const std::optional<SessionSummary>& prior, Gateway& gateway);

SessionRecord run_session(const EngineConfig& cfg, const InterviewProtocol& protocol, const SessionInputs& inputs,
                          UserChannel& channel, const EngineDeps& deps, MemoryGraph& graph);

struct InterviewOptions {
  std::string interview_id = "interview";
  std::string persona_id;
  std::uint64_t seed = 0;
  nlohmann::json config_snapshot = nlohmann::json::object();
  std::function<void(const InterviewRecord&)> persist;  // called after every session and on error
};

// Runs sessions in protocol order until done or session_limit. A session
// error is recorded, the partial record persisted, and the error rethrown.
InterviewRecord run_interview(const EngineConfig& cfg, const InterviewProtocol& protocol, UserChannel& channel,
                              const EngineDeps& deps, const InterviewOptions& options);

}  // namespace memoir
