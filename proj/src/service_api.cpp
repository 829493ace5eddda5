#include "memoir/service_api.hpp"

#include <httplib.h>

#include <cstdio>
#include <fstream>

#include "memoir/error.hpp"
#include "memoir/record_io.hpp"
#include "memoir/text.hpp"

namespace memoir {

namespace fs = std::filesystem;

std::string_view to_string(InterviewStatus s) {
  switch (s) {
    case InterviewStatus::AwaitingUser: return "awaiting_user";
    case InterviewStatus::Generating: return "generating";
    case InterviewStatus::BetweenSessions: return "between_sessions";
    case InterviewStatus::Done: return "done";
  }
  return "unknown";
}

bool transition_allowed(InterviewStatus from, InterviewStatus to) {
  using S = InterviewStatus;
  switch (from) {
    case S::Generating: return to == S::AwaitingUser || to == S::BetweenSessions || to == S::Done;
    case S::AwaitingUser: return to == S::Generating || to == S::Done;
    case S::BetweenSessions: return to == S::AwaitingUser || to == S::Done;
    case S::Done: return false;
  }
  return false;
}

nlohmann::json to_json(const InterviewHandle& h) {
  return {{"interview_id", h.interview_id},
          {"persona_id", h.persona_id},
          {"status", std::string(to_string(h.status))},
          {"topic_ordinal", h.topic_ordinal}};
}

nlohmann::json to_json(const ServerEvent& e) { return {{"seq", e.seq}, {"type", e.type}, {"data", e.data}}; }

ServerEvent server_event_from_json(const nlohmann::json& j) {
  return {j.at("seq").get<std::size_t>(), j.at("type").get<std::string>(), j.value("data", nlohmann::json::object())};
}

std::string_view to_string(JobKind k) {
  switch (k) {
    case JobKind::Simulate: return "simulate";
    case JobKind::Evaluate: return "evaluate";
    case JobKind::GenerateBook: return "generate_book";
  }
  return "unknown";
}

std::optional<JobKind> job_kind_from_string(std::string_view name) {
  for (auto k : {JobKind::Simulate, JobKind::Evaluate, JobKind::GenerateBook}) {
    if (to_string(k) == name) return k;
  }
  return std::nullopt;
}

std::string_view to_string(JobStatus s) {
  switch (s) {
    case JobStatus::Queued: return "queued";
    case JobStatus::Running: return "running";
    case JobStatus::Succeeded: return "succeeded";
    case JobStatus::Failed: return "failed";
  }
  return "unknown";
}

nlohmann::json to_json(const JobState& j) {
  nlohmann::json out = {{"job_id", j.job_id}, {"kind", std::string(to_string(j.kind))},
                        {"status", std::string(to_string(j.status))}, {"result", j.result}};
  out["error"] = j.error ? nlohmann::json(*j.error) : nlohmann::json(nullptr);
  return out;
}

int http_status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidConfig:
    case ErrorCode::InvalidPayload:
    case ErrorCode::EmptyText:
    case ErrorCode::ValidationError:
    case ErrorCode::ParseError:
    case ErrorCode::InvalidRequest: return 400;
    case ErrorCode::UnknownId:
    case ErrorCode::JobNotFound: return 404;
    case ErrorCode::WrongStatus: return 409;
    case ErrorCode::CapacityExceeded: return 429;
    case ErrorCode::BackendUnreachable: return 502;
    default: return 500;
  }
}

// ---- one live interview ------------------------------------------------------

namespace {

struct StopRequested {};

}  // namespace

class LiveInterview final : public UserChannel, public EngineObserver {
 public:
  LiveInterview(const ServiceContext& ctx, std::string id, std::string persona_id, std::uint64_t seed,
                EngineConfig engine, nlohmann::json engine_json, std::vector<ServerEvent> replay)
      : ctx_(ctx),
        id_(std::move(id)),
        persona_id_(std::move(persona_id)),
        seed_(seed),
        engine_(std::move(engine)),
        engine_json_(std::move(engine_json)),
        events_(std::move(replay)) {
    for (const auto& e : events_) {
      if (e.type == "user_turn") replay_inputs_.emplace_back(e.data.at("text").get<std::string>());
      if (e.type == "channel_closed") replay_inputs_.emplace_back(std::nullopt);
    }
    if (!ctx_.options.state_dir.empty()) dir_ = ctx_.options.state_dir / id_;
    publish_snapshot_locked();
  }

  ~LiveInterview() override { stop(); }

  void start() {
    if (!dir_.empty() && events_.empty()) {
      write_json_file(dir_ / "meta.json", {{"interview_id", id_},
                                           {"persona_id", persona_id_},
                                           {"seed", seed_},
                                           {"engine", engine_json_}});
    }
    worker_ = std::thread([this] { run(); });
  }

  void stop() {
    {
      std::lock_guard lock(mutex_);
      stopping_ = true;
    }
    cv_.notify_all();
    if (worker_.joinable()) worker_.join();
  }

  // ---- service-facing, any thread ----

  InterviewHandle handle() const {
    std::lock_guard lock(mutex_);
    return handle_locked();
  }

  // Returns the handle as of the accepted turn (status generating).
  InterviewHandle post(const std::string& text, bool close) {
    std::lock_guard lock(mutex_);
    if (status_ != InterviewStatus::AwaitingUser) {
      throw Error(ErrorCode::WrongStatus, "interview " + id_ + " is " + std::string(to_string(status_)));
    }
    if (!close && text::trim(text).empty()) throw Error(ErrorCode::EmptyText, "user turn is empty");
    pending_ = close ? std::optional<std::string>{} : std::optional<std::string>{text};
    has_pending_ = true;
    set_status_locked(InterviewStatus::Generating);
    cv_.notify_all();
    return handle_locked();
  }

  EventBatch next(std::size_t cursor, std::chrono::milliseconds timeout) const {
    std::unique_lock lock(mutex_);
    const bool ready = cv_.wait_for(lock, timeout, [&] {
      return published_ > cursor || status_ == InterviewStatus::Done || stopping_;
    });
    EventBatch b;
    b.status = status_;
    b.timed_out = !ready || published_ <= cursor;
    for (std::size_t i = cursor; i < published_; ++i) b.events.push_back(events_[i]);
    b.next_cursor = std::max(cursor, published_);
    return b;
  }

  bool wait_for_first_event(std::chrono::milliseconds timeout) const {
    std::unique_lock lock(mutex_);
    return cv_.wait_for(lock, timeout, [&] { return published_ > 0 || status_ == InterviewStatus::Done; });
  }

  bool wait_done(std::chrono::milliseconds timeout) const {
    std::unique_lock lock(mutex_);
    return cv_.wait_for(lock, timeout, [&] { return status_ == InterviewStatus::Done; });
  }

  nlohmann::json artifacts() const {
    std::lock_guard lock(mutex_);
    return snapshot_;
  }

  std::vector<InterviewStatus> history() const {
    std::lock_guard lock(mutex_);
    return history_;
  }

  bool live() const {
    std::lock_guard lock(mutex_);
    return status_ != InterviewStatus::Done;
  }

  // ---- UserChannel, engine thread ----

  std::optional<std::string> respond(const ChatMessage&, const Transcript&, const std::string&) override {
    std::unique_lock lock(mutex_);
    if (!replay_inputs_.empty()) {
      auto next = std::move(replay_inputs_.front());
      replay_inputs_.pop_front();
      set_status_locked(InterviewStatus::Generating);
      if (!next) closing_ = true;
      return next;
    }
    cv_.wait(lock, [&] { return has_pending_ || stopping_; });
    if (stopping_ && !has_pending_) throw StopRequested{};
    has_pending_ = false;
    auto reply = std::move(pending_);
    if (!reply) closing_ = true;
    return reply;
  }

  // ---- EngineObserver, engine thread ----

  void on_session_start(int ordinal, const std::string& topic_id, const MemoryGraph& graph) override {
    graph_ = &graph;
    current_ = SessionRecord{};
    current_.ordinal = ordinal;
    current_.topic_id = topic_id;
    std::lock_guard lock(mutex_);
    ordinal_ = ordinal;
  }

  void on_interviewer_turn(const SessionRecord& session, const ChatMessage& msg) override {
    current_ = session;
    emit("interviewer_turn", turn_payload(session, msg), InterviewStatus::AwaitingUser);
  }

  void on_user_turn(const SessionRecord& session, const ChatMessage& msg) override {
    current_ = session;
    emit("user_turn", turn_payload(session, msg), std::nullopt);
  }

  void on_summary(const SessionSummary& summary) override {
    if (closing_) {
      closing_ = false;
      emit("channel_closed", {{"ordinal", summary.ordinal}}, std::nullopt);
    }
    emit("summary_ready", to_json(summary), std::nullopt);
  }

  void on_session_end(const SessionRecord& session) override {
    if (closing_) {
      closing_ = false;
      emit("channel_closed", {{"ordinal", session.ordinal}}, std::nullopt);
    }
    done_.push_back(session);
    if (session.summary) summaries_.push_back(*session.summary);
    current_ = SessionRecord{};
    in_session_ = false;
    emit("session_end",
         {{"ordinal", session.ordinal}, {"topic_id", session.topic_id}, {"rounds_used", session.rounds_used}},
         InterviewStatus::BetweenSessions);
  }

 private:
  static nlohmann::json turn_payload(const SessionRecord& s, const ChatMessage& m) {
    return {{"ordinal", s.ordinal},
            {"topic_id", s.topic_id},
            {"session_id", s.session_id},
            {"turn_index", m.turn_index},
            {"role", std::string(to_string(m.role))},
            {"text", m.text}};
  }

  InterviewHandle handle_locked() const { return {id_, persona_id_, status_, ordinal_}; }

  void set_status_locked(InterviewStatus to) {
    if (to == status_) return;
    if (!transition_allowed(status_, to)) {
      throw std::logic_error("illegal status transition " + std::string(to_string(status_)) + " -> " +
                             std::string(to_string(to)));
    }
    status_ = to;
    history_.push_back(to);
  }

  void emit(const std::string& type, nlohmann::json data, std::optional<InterviewStatus> status) {
    if (type == "interviewer_turn") in_session_ = true;
    std::size_t cursor = 0;
    std::size_t nodes = graph_ ? graph_->size() : 0;
    {
      std::lock_guard lock(mutex_);
      if (status) set_status_locked(*status);
      ServerEvent e{published_, type, std::move(data)};
      if (published_ < events_.size()) {
        // Replaying a logged event: the log stays authoritative.
      } else {
        events_.push_back(e);
        append_to_log(e);
      }
      ++published_;
      publish_snapshot_locked();
      cursor = published_;
    }
    cv_.notify_all();
    if (ctx_.snapshot_hook) ctx_.snapshot_hook(id_, cursor, nodes);
  }

  void append_to_log(const ServerEvent& e) {
    if (dir_.empty()) return;
    fs::create_directories(dir_);
    std::ofstream out(dir_ / "events.jsonl", std::ios::app | std::ios::binary);
    out << to_json(e).dump() << "\n";
    out.flush();
  }

  void publish_snapshot_locked() {
    nlohmann::json sessions = nlohmann::json::array();
    for (const auto& s : done_) sessions.push_back(to_json(s));
    if (in_session_) sessions.push_back(to_json(current_));
    nlohmann::json summaries = nlohmann::json::array();
    for (const auto& s : summaries_) summaries.push_back(to_json(s));
    nlohmann::json chapters = nlohmann::json::array();
    if (book_) {
      for (const auto& c : book_->chapters) chapters.push_back(to_json(c));
    }
    snapshot_ = {{"interview_id", id_},
                 {"persona_id", persona_id_},
                 {"seed", seed_},
                 {"config", ctx_.config_snapshot},
                 {"engine", engine_json_},
                 {"cursor", published_},
                 {"status", std::string(to_string(status_))},
                 {"topic_ordinal", ordinal_},
                 {"sessions", sessions},
                 {"summaries", summaries},
                 {"graph", graph_ ? graph_->to_json() : MemoryGraph().to_json()},
                 {"chapters", chapters}};
  }

  void run() {
    EngineDeps deps = ctx_.make_deps(seed_);
    deps.observer = this;
    InterviewOptions opts;
    opts.interview_id = id_;
    opts.persona_id = persona_id_;
    opts.seed = seed_;
    opts.config_snapshot = ctx_.config_snapshot;
    opts.config_snapshot["engine"] = engine_json_;
    // The final record outlives run_interview so the graph pointer stays valid.
    opts.persist = [this](const InterviewRecord& r) { last_record_ = r; };
    try {
      InterviewRecord record = run_interview(engine_, ctx_.protocol, *this, deps, opts);
      last_record_ = record;
      graph_ = &last_record_.graph;
      if (ctx_.generate_book && !record.sessions.empty()) {
        book_ = write_book(record, ctx_.protocol, engine_.mode, *deps.gateway);
        emit("book_ready", {{"chapters", book_->chapters.size()}}, std::nullopt);
      }
      emit("done", {{"complete", record.complete}, {"sessions", record.sessions.size()}}, InterviewStatus::Done);
    } catch (const StopRequested&) {
      return;
    } catch (const Error& e) {
      graph_ = &last_record_.graph;
      emit("error", {{"code", std::string(to_string(e.code()))}, {"message", e.what()}}, std::nullopt);
      emit("done", {{"complete", false}, {"sessions", done_.size()}}, InterviewStatus::Done);
    } catch (const std::exception& e) {
      graph_ = &last_record_.graph;
      emit("error", {{"code", "internal"}, {"message", e.what()}}, std::nullopt);
      emit("done", {{"complete", false}, {"sessions", done_.size()}}, InterviewStatus::Done);
    }
  }

  const ServiceContext& ctx_;
  const std::string id_;
  const std::string persona_id_;
  const std::uint64_t seed_;
  const EngineConfig engine_;
  const nlohmann::json engine_json_;
  fs::path dir_;

  mutable std::mutex mutex_;
  mutable std::condition_variable cv_;
  InterviewStatus status_ = InterviewStatus::Generating;
  std::vector<InterviewStatus> history_{InterviewStatus::Generating};
  int ordinal_ = 0;
  std::vector<ServerEvent> events_;
  std::size_t published_ = 0;
  std::deque<std::optional<std::string>> replay_inputs_;
  std::optional<std::string> pending_;
  bool has_pending_ = false;
  bool stopping_ = false;
  nlohmann::json snapshot_;

  // Engine-thread state.
  const MemoryGraph* graph_ = nullptr;
  SessionRecord current_;
  bool in_session_ = false;
  bool closing_ = false;
  std::vector<SessionRecord> done_;
  std::vector<SessionSummary> summaries_;
  InterviewRecord last_record_;
  std::optional<Autobiography> book_;

  std::thread worker_;
};

// ---- service -------------------------------------------------------------------

struct InterviewService::Job {
  JobState state;
  std::thread worker;
};

InterviewService::InterviewService(ServiceContext ctx) : ctx_(std::move(ctx)) {
  if (!ctx_.make_deps) throw Error(ErrorCode::InvalidConfig, "service: make_deps is required");
}

InterviewService::~InterviewService() {
  std::map<std::string, std::shared_ptr<LiveInterview>> interviews;
  std::map<std::string, std::shared_ptr<Job>> jobs;
  {
    std::lock_guard lock(mutex_);
    interviews.swap(interviews_);
    jobs.swap(jobs_);
  }
  for (auto& [_, iv] : interviews) iv->stop();
  for (auto& [_, job] : jobs) {
    if (job->worker.joinable()) job->worker.join();
  }
}

std::shared_ptr<LiveInterview> InterviewService::find(const std::string& id) const {
  std::lock_guard lock(mutex_);
  auto it = interviews_.find(id);
  if (it == interviews_.end()) throw Error(ErrorCode::UnknownId, "unknown interview " + id);
  return it->second;
}

std::shared_ptr<LiveInterview> InterviewService::launch(const std::string& id, const std::string& persona_id,
                                                        std::uint64_t seed, const EngineConfig& engine,
                                                        const nlohmann::json& engine_json,
                                                        std::vector<ServerEvent> replay) {
  auto iv = std::make_shared<LiveInterview>(ctx_, id, persona_id, seed, engine, engine_json, std::move(replay));
  iv->start();
  return iv;
}

InterviewHandle InterviewService::create_interview(const nlohmann::json& payload) {
  if (!payload.is_object()) throw Error(ErrorCode::InvalidConfig, "payload must be a JSON object");
  for (const auto& [k, _] : payload.items()) {
    if (k != "persona_id" && k != "seed" && k != "engine") throw Error(ErrorCode::InvalidConfig, k + ": unknown field");
  }
  nlohmann::json engine_json = engine_config_json(ctx_.default_engine);
  EngineConfig engine;
  try {
    if (payload.contains("engine")) {
      if (!payload["engine"].is_object()) throw Error(ErrorCode::ValidationError, "engine: expected an object");
      engine_json.merge_patch(payload["engine"]);
    }
    engine = parse_engine_config(engine_json, "engine");
    engine.validate(ctx_.protocol.topic_count());
  } catch (const Error& e) {
    throw Error(ErrorCode::InvalidConfig, e.what());
  }
  engine.session_time_budget = ctx_.default_engine.session_time_budget;
  engine_json = engine_config_json(engine);

  std::string persona_id = "user";
  std::uint64_t seed = ctx_.seed;
  if (payload.contains("persona_id")) {
    if (!payload["persona_id"].is_string()) throw Error(ErrorCode::InvalidConfig, "persona_id: expected a string");
    persona_id = payload["persona_id"].get<std::string>();
  }
  if (payload.contains("seed")) {
    const auto& sv = payload["seed"];
    if (!sv.is_number_integer() || sv.get<std::int64_t>() < 0) {
      throw Error(ErrorCode::InvalidConfig, "seed: expected a non-negative integer");
    }
    seed = payload["seed"].get<std::uint64_t>();
  }

  std::shared_ptr<LiveInterview> iv;
  {
    std::lock_guard lock(mutex_);
    const auto live = static_cast<std::size_t>(
        std::count_if(interviews_.begin(), interviews_.end(), [](const auto& kv) { return kv.second->live(); }));
    if (live >= ctx_.options.max_interviews) {
      throw Error(ErrorCode::CapacityExceeded,
                  "at most " + std::to_string(ctx_.options.max_interviews) + " live interviews");
    }
    char id[32];
    std::snprintf(id, sizeof id, "iv-%04llu", static_cast<unsigned long long>(next_interview_++));
    iv = launch(id, persona_id, seed, engine, engine_json, {});
    interviews_.emplace(id, iv);
  }
  iv->wait_for_first_event(std::chrono::minutes(5));
  return iv->handle();
}

InterviewHandle InterviewService::post_user_turn(const std::string& interview_id, const std::string& text,
                                                 bool close) {
  return find(interview_id)->post(text, close);
}

EventBatch InterviewService::next_events(const std::string& interview_id, std::size_t cursor,
                                         std::chrono::milliseconds timeout) {
  return find(interview_id)->next(cursor, timeout);
}

InterviewHandle InterviewService::handle(const std::string& interview_id) const {
  return find(interview_id)->handle();
}

nlohmann::json InterviewService::artifacts(const std::string& interview_id) const {
  return find(interview_id)->artifacts();
}

std::vector<InterviewStatus> InterviewService::status_history(const std::string& interview_id) const {
  return find(interview_id)->history();
}

bool InterviewService::wait_done(const std::string& interview_id, std::chrono::milliseconds timeout) const {
  return find(interview_id)->wait_done(timeout);
}

std::string InterviewService::run_job(JobKind kind, const nlohmann::json& payload) {
  if (!ctx_.prepare_job) throw Error(ErrorCode::InvalidPayload, "jobs are not configured on this server");
  auto fn = ctx_.prepare_job(kind, payload);
  auto job = std::make_shared<Job>();
  {
    std::lock_guard lock(mutex_);
    char id[32];
    std::snprintf(id, sizeof id, "job-%04llu", static_cast<unsigned long long>(next_job_++));
    job->state.job_id = id;
    job->state.kind = kind;
    jobs_.emplace(id, job);
  }
  const fs::path state_dir = ctx_.options.state_dir;
  job->worker = std::thread([this, job, fn = std::move(fn), state_dir] {
    {
      std::lock_guard lock(mutex_);
      job->state.status = JobStatus::Running;
    }
    nlohmann::json result;
    std::optional<std::string> error;
    try {
      result = fn();
    } catch (const std::exception& e) {
      error = e.what();
    }
    std::lock_guard lock(mutex_);
    job->state.status = error ? JobStatus::Failed : JobStatus::Succeeded;
    job->state.result = std::move(result);
    job->state.error = std::move(error);
    if (!state_dir.empty()) {
      try {
        write_json_file(state_dir / "jobs" / (job->state.job_id + ".json"), to_json(job->state));
      } catch (const std::exception&) {
        // The in-memory state remains fetchable.
      }
    }
  });
  return job->state.job_id;
}

JobState InterviewService::poll_job(const std::string& job_id) const {
  std::lock_guard lock(mutex_);
  auto it = jobs_.find(job_id);
  if (it == jobs_.end()) throw Error(ErrorCode::JobNotFound, "unknown job " + job_id);
  return it->second->state;
}

bool InterviewService::wait_job(const std::string& job_id, std::chrono::milliseconds timeout) const {
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  while (std::chrono::steady_clock::now() < deadline) {
    const auto s = poll_job(job_id).status;
    if (s == JobStatus::Succeeded || s == JobStatus::Failed) return true;
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  return false;
}

std::size_t InterviewService::resume_from_disk() {
  const fs::path root = ctx_.options.state_dir;
  if (root.empty() || !fs::exists(root)) return 0;
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory() && fs::exists(entry.path() / "meta.json")) dirs.push_back(entry.path());
  }
  std::sort(dirs.begin(), dirs.end());
  std::size_t resumed = 0;
  for (const auto& dir : dirs) {
    const auto meta = read_json_file(dir / "meta.json");
    const std::string id = meta.at("interview_id").get<std::string>();
    std::vector<ServerEvent> log;
    std::ifstream in(dir / "events.jsonl", std::ios::binary);
    std::string line;
    while (std::getline(in, line)) {
      if (text::trim(line).empty()) continue;
      try {
        log.push_back(server_event_from_json(nlohmann::json::parse(line)));
      } catch (const nlohmann::json::exception&) {
        break;  // torn final line from a crash
      }
    }
    const EngineConfig engine = parse_engine_config(meta.at("engine"), "engine");
    std::lock_guard lock(mutex_);
    if (interviews_.count(id)) continue;
    unsigned long long n = 0;
    if (std::sscanf(id.c_str(), "iv-%llu", &n) == 1) next_interview_ = std::max<std::uint64_t>(next_interview_, n + 1);
    interviews_.emplace(id, launch(id, meta.value("persona_id", std::string("user")),
                                   meta.value("seed", std::uint64_t{0}), engine, meta.at("engine"), std::move(log)));
    ++resumed;
  }
  return resumed;
}

// ---- HTTP --------------------------------------------------------------------------

namespace {

void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, ErrorCode code, const std::string& message) {
  send_json(res, http_status_for(code), {{"code", std::string(to_string(code))}, {"message", message}});
}

nlohmann::json parse_body(const httplib::Request& req) {
  if (text::trim(req.body).empty()) return nlohmann::json::object();
  try {
    return nlohmann::json::parse(req.body);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidPayload, std::string("request body: ") + e.what());
  }
}

template <typename F>
httplib::Server::Handler guarded(const std::string& token, F f) {
  return [token, f](const httplib::Request& req, httplib::Response& res) {
    if (!token.empty() && req.get_header_value("Authorization") != "Bearer " + token) {
      send_json(res, 401, {{"code", "unauthorized"}, {"message", "missing or wrong bearer token"}});
      return;
    }
    try {
      f(req, res);
    } catch (const Error& e) {
      send_error(res, e.code(), e.what());
    } catch (const std::exception& e) {
      send_json(res, 500, {{"code", "internal"}, {"message", e.what()}});
    }
  };
}

std::size_t query_number(const httplib::Request& req, const char* key, std::size_t fallback) {
  if (!req.has_param(key)) return fallback;
  const std::string v = req.get_param_value(key);
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos) {
    throw Error(ErrorCode::InvalidPayload, std::string(key) + ": expected a non-negative integer");
  }
  return static_cast<std::size_t>(std::stoull(v));
}

}  // namespace

HttpApi::HttpApi(InterviewService& service) : service_(service), server_(std::make_unique<httplib::Server>()) {
  install_routes();
}

HttpApi::~HttpApi() { stop(); }

int HttpApi::bind(const std::string& host, int port) {
  if (port == 0) return server_->bind_to_any_port(host);
  if (!server_->bind_to_port(host, port)) throw Error(ErrorCode::IoError, "cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void HttpApi::listen() { server_->listen_after_bind(); }

void HttpApi::stop() {
  if (server_) server_->stop();
}

void HttpApi::install_routes() {
  const std::string token = service_.context().options.token;
  auto& svc = service_;

  server_->Get("/health", [](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, {{"status", "ok"}});
  });

  server_->Post("/interviews", guarded(token, [&svc](const httplib::Request& req, httplib::Response& res) {
    send_json(res, 201, to_json(svc.create_interview(parse_body(req))));
  }));

  server_->Get("/interviews/:id", guarded(token, [&svc](const httplib::Request& req, httplib::Response& res) {
    send_json(res, 200, to_json(svc.handle(req.path_params.at("id"))));
  }));

  server_->Post("/interviews/:id/turns", guarded(token, [&svc](const httplib::Request& req, httplib::Response& res) {
    const auto body = parse_body(req);
    const bool close = body.value("close", false);
    if (!close && (!body.contains("text") || !body["text"].is_string())) {
      throw Error(ErrorCode::InvalidPayload, "text: expected a string");
    }
    const std::string text = close ? std::string{} : body["text"].get<std::string>();
    send_json(res, 202, to_json(svc.post_user_turn(req.path_params.at("id"), text, close)));
  }));

  const auto long_poll = std::chrono::milliseconds(service_.context().options.long_poll_ms);
  server_->Get("/interviews/:id/events",
               guarded(token, [&svc, long_poll](const httplib::Request& req, httplib::Response& res) {
                 const std::string id = req.path_params.at("id");
                 std::size_t cursor = query_number(req, "cursor", 0);
                 const auto timeout = std::chrono::milliseconds(
                     query_number(req, "timeout_ms", static_cast<std::size_t>(long_poll.count())));
                 svc.handle(id);  // unknown-id before any streaming starts

                 if (req.get_header_value("Accept").find("text/event-stream") != std::string::npos) {
                   res.set_chunked_content_provider(
                       "text/event-stream", [&svc, id, cursor, timeout](std::size_t, httplib::DataSink& sink) mutable {
                         auto batch = svc.next_events(id, cursor, timeout);
                         for (const auto& e : batch.events) {
                           const std::string frame = "id: " + std::to_string(e.seq) + "\nevent: " + e.type +
                                                     "\ndata: " + to_json(e).dump() + "\n\n";
                           if (!sink.write(frame.data(), frame.size())) return false;
                         }
                         if (batch.timed_out && batch.events.empty()) {
                           const std::string ping = ": keep-alive\n\n";
                           if (!sink.write(ping.data(), ping.size())) return false;
                         }
                         cursor = batch.next_cursor;
                         if (batch.status == InterviewStatus::Done && batch.events.empty()) {
                           sink.done();
                         }
                         return true;
                       });
                   return;
                 }

                 const auto batch = svc.next_events(id, cursor, timeout);
                 nlohmann::json events = nlohmann::json::array();
                 for (const auto& e : batch.events) events.push_back(to_json(e));
                 send_json(res, 200,
                           {{"events", events},
                            {"next_cursor", batch.next_cursor},
                            {"status", std::string(to_string(batch.status))},
                            {"timed_out", batch.timed_out}});
               }));

  server_->Get("/interviews/:id/artifacts", guarded(token, [&svc](const httplib::Request& req, httplib::Response& res) {
    send_json(res, 200, svc.artifacts(req.path_params.at("id")));
  }));

  server_->Post("/jobs", guarded(token, [&svc](const httplib::Request& req, httplib::Response& res) {
    const auto body = parse_body(req);
    if (!body.contains("kind") || !body["kind"].is_string()) throw Error(ErrorCode::InvalidPayload, "kind: required");
    const auto kind = job_kind_from_string(body["kind"].get<std::string>());
    if (!kind) throw Error(ErrorCode::InvalidPayload, "kind: expected simulate, evaluate or generate_book");
    const std::string id = svc.run_job(*kind, body.value("payload", nlohmann::json::object()));
    send_json(res, 202, {{"job_id", id}, {"status", "queued"}});
  }));

  server_->Get("/jobs/:id", guarded(token, [&svc](const httplib::Request& req, httplib::Response& res) {
    send_json(res, 200, to_json(svc.poll_job(req.path_params.at("id"))));
  }));
}

}  // namespace memoir
