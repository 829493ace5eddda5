#pragma once

#include <nlohmann/json.hpp>

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "memoir/app_config.hpp"
#include "memoir/autobiographer.hpp"
#include "memoir/error.hpp"
#include "memoir/interview_engine.hpp"
#include "memoir/protocol.hpp"

namespace httplib {
class Server;
}

namespace memoir {

enum class InterviewStatus { AwaitingUser, Generating, BetweenSessions, Done };

std::string_view to_string(InterviewStatus s);

// Allowed moves of the per-interview status machine.
bool transition_allowed(InterviewStatus from, InterviewStatus to);

struct InterviewHandle {
  std::string interview_id;
  std::string persona_id;
  InterviewStatus status = InterviewStatus::Generating;
  int topic_ordinal = 0;
};

nlohmann::json to_json(const InterviewHandle& h);

// Event types: interviewer_turn, user_turn, channel_closed, summary_ready,
// session_end, book_ready, error, done.
struct ServerEvent {
  std::size_t seq = 0;  // position in the interview's log, from 0
  std::string type;
  nlohmann::json data;

  bool operator==(const ServerEvent&) const = default;
};

nlohmann::json to_json(const ServerEvent& e);
ServerEvent server_event_from_json(const nlohmann::json& j);

struct EventBatch {
  std::vector<ServerEvent> events;
  std::size_t next_cursor = 0;
  InterviewStatus status = InterviewStatus::Generating;
  bool timed_out = false;
};

enum class JobKind { Simulate, Evaluate, GenerateBook };
std::string_view to_string(JobKind k);
std::optional<JobKind> job_kind_from_string(std::string_view name);

enum class JobStatus { Queued, Running, Succeeded, Failed };
std::string_view to_string(JobStatus s);

struct JobState {
  std::string job_id;
  JobKind kind = JobKind::Simulate;
  JobStatus status = JobStatus::Queued;
  nlohmann::json result;
  std::optional<std::string> error;
};

nlohmann::json to_json(const JobState& j);

struct ServiceContext {
  InterviewProtocol protocol;
  EngineConfig default_engine;
  ServiceOptions options;
  nlohmann::json config_snapshot = nlohmann::json::object();
  std::uint64_t seed = 0;
  bool generate_book = true;
  // Gateway and detector for one interview.
  std::function<EngineDeps(std::uint64_t seed)> make_deps;
  // Validates the payload (throwing InvalidPayload) and returns a runnable job.
  std::function<std::function<nlohmann::json()>(JobKind, const nlohmann::json&)> prepare_job;
  // Test hook: called on the engine thread with (cursor, graph node count)
  // each time an artifacts snapshot is published.
  std::function<void(const std::string&, std::size_t, std::size_t)> snapshot_hook;
};

class LiveInterview;

// Owns every live interview and background job. Thread-safe.
class InterviewService {
 public:
  explicit InterviewService(ServiceContext ctx);
  ~InterviewService();

  InterviewService(const InterviewService&) = delete;
  InterviewService& operator=(const InterviewService&) = delete;

  // payload: {persona_id?, seed?, engine?}. Returns once the opening
  // interviewer turn is in the log (or the interview ended).
  InterviewHandle create_interview(const nlohmann::json& payload);

  // close=true ends the interview instead of answering.
  InterviewHandle post_user_turn(const std::string& interview_id, const std::string& text, bool close = false);

  // Events from `cursor` on; waits up to `timeout` when none are available yet.
  EventBatch next_events(const std::string& interview_id, std::size_t cursor, std::chrono::milliseconds timeout);

  InterviewHandle handle(const std::string& interview_id) const;
  nlohmann::json artifacts(const std::string& interview_id) const;
  std::vector<InterviewStatus> status_history(const std::string& interview_id) const;

  // Blocks until the interview reaches Done or the timeout passes.
  bool wait_done(const std::string& interview_id, std::chrono::milliseconds timeout) const;

  std::string run_job(JobKind kind, const nlohmann::json& payload);
  JobState poll_job(const std::string& job_id) const;
  bool wait_job(const std::string& job_id, std::chrono::milliseconds timeout) const;

  // Rebuilds interviews found under options.state_dir by replaying their logs.
  std::size_t resume_from_disk();

  const ServiceContext& context() const { return ctx_; }

 private:
  std::shared_ptr<LiveInterview> find(const std::string& id) const;
  std::shared_ptr<LiveInterview> launch(const std::string& id, const std::string& persona_id, std::uint64_t seed,
                                        const EngineConfig& engine, const nlohmann::json& engine_json,
                                        std::vector<ServerEvent> replay);

  ServiceContext ctx_;
  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<LiveInterview>> interviews_;
  std::uint64_t next_interview_ = 1;

  struct Job;
  std::map<std::string, std::shared_ptr<Job>> jobs_;
  std::uint64_t next_job_ = 1;
};

// HTTP + JSON routes over an InterviewService:
//   POST /interviews, GET /interviews/{id}, POST /interviews/{id}/turns,
//   GET /interviews/{id}/events?cursor=n[&timeout_ms=t] (JSON long-poll, or SSE
//   with Accept: text/event-stream), GET /interviews/{id}/artifacts,
//   POST /jobs, GET /jobs/{id}, GET /health.
class HttpApi {
 public:
  explicit HttpApi(InterviewService& service);
  ~HttpApi();

  // Binds (port 0 picks a free port) and returns the bound port.
  int bind(const std::string& host, int port);
  // Serves until stop(); call after bind().
  void listen();
  void stop();

 private:
  void install_routes();

  InterviewService& service_;
  std::unique_ptr<httplib::Server> server_;
};

// Maps an error code to its HTTP status.
int http_status_for(ErrorCode code);

}  // namespace memoir
