#include <gtest/gtest.h>

#include <atomic>
#include <condition_variable>
#include <mutex>
#include <thread>

#include "memoir/error.hpp"
#include "memoir/service_api.hpp"
#include "test_support.hpp"

// After Eigen: resolv.h (pulled in here) defines a _res macro.
#include <httplib.h>

using namespace memoir;
using namespace std::chrono_literals;

namespace {

const InterviewProtocol& protocol() {
  static const InterviewProtocol p = load_protocol(default_protocol_path());
  return p;
}

// Mock backend whose completions wait while the gate is closed.
class GatedBackend final : public Backend {
 public:
  explicit GatedBackend(std::shared_ptr<Backend> inner) : inner_(std::move(inner)) {}

  std::string complete(const CompletionRequest& r) override {
    std::unique_lock lock(mutex_);
    cv_.wait(lock, [&] { return open_; });
    lock.unlock();
    return inner_->complete(r);
  }
  EmbeddingVector embed(std::string_view t) override { return inner_->embed(t); }
  std::size_t dimension() const override { return inner_->dimension(); }
  std::string name() const override { return "gated"; }

  void set_open(bool open) {
    {
      std::lock_guard lock(mutex_);
      open_ = open;
    }
    cv_.notify_all();
  }

 private:
  std::shared_ptr<Backend> inner_;
  std::mutex mutex_;
  std::condition_variable cv_;
  bool open_ = true;
};

struct Harness {
  std::shared_ptr<GatedBackend> backend;
  ServiceContext ctx;
};

Harness harness(int sessions = 2, int rounds = 2, ServiceOptions options = {}) {
  Harness h;
  auto script = MockScript::load(testkit::data_dir() / "mock" / "interview_script.json");
  h.backend = std::make_shared<GatedBackend>(std::make_shared<MockBackend>(std::move(script)));
  h.ctx.protocol = protocol();
  h.ctx.default_engine.session_limit = sessions;
  h.ctx.default_engine.round_limit = rounds;
  h.ctx.options = options;
  h.ctx.seed = 5;
  auto backend = h.backend;
  h.ctx.make_deps = [backend](std::uint64_t) {
    EngineDeps d;
    d.gateway = std::make_shared<Gateway>(backend);
    return d;
  };
  return h;
}

std::string dated_answer(int i) {
  static const char* names[] = {"Ruth", "Walter", "Agnes"};
  return "In " + std::to_string(1950 + i) + ", I planted a tree with " + names[i % 3] + ".";
}

// Answers every question until the interview is done; returns the answer count.
int drive(InterviewService& svc, const std::string& id, int close_after = -1) {
  int answers = 0;
  std::size_t cursor = 0;
  for (int guard = 0; guard < 10000; ++guard) {
    const auto h = svc.handle(id);
    if (h.status == InterviewStatus::Done) return answers;
    if (h.status == InterviewStatus::AwaitingUser) {
      if (answers == close_after) {
        svc.post_user_turn(id, "", true);
      } else {
        svc.post_user_turn(id, dated_answer(answers));
      }
      ++answers;
      continue;
    }
    cursor = svc.next_events(id, cursor, 200ms).next_cursor;
  }
  ADD_FAILURE() << "interview did not finish";
  return answers;
}

bool wait_status(InterviewService& svc, const std::string& id, InterviewStatus want) {
  for (int i = 0; i < 2000; ++i) {
    if (svc.handle(id).status == want) return true;
    std::this_thread::sleep_for(1ms);
  }
  return false;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::IoError;
}

}  // namespace

TEST(StatusMachine, OnlyDocumentedTransitions) {
  using S = InterviewStatus;
  const std::set<std::pair<S, S>> allowed = {{S::AwaitingUser, S::Generating}, {S::Generating, S::AwaitingUser},
                                             {S::Generating, S::BetweenSessions}, {S::BetweenSessions, S::AwaitingUser},
                                             {S::Generating, S::Done},           {S::AwaitingUser, S::Done},
                                             {S::BetweenSessions, S::Done}};
  const S all[] = {S::AwaitingUser, S::Generating, S::BetweenSessions, S::Done};
  for (auto a : all) {
    for (auto b : all) EXPECT_EQ(transition_allowed(a, b), allowed.count({a, b}) > 0) << to_string(a) << "->" << to_string(b);
  }
}

TEST(Service, CreateOpensFirstTopic) {
  auto h = harness();
  InterviewService svc(h.ctx);
  const auto a = svc.create_interview({{"persona_id", "walter"}});
  EXPECT_EQ(a.topic_ordinal, 1);
  EXPECT_EQ(a.status, InterviewStatus::AwaitingUser);
  EXPECT_EQ(a.persona_id, "walter");
  const auto b = svc.create_interview(nlohmann::json::object());
  EXPECT_NE(a.interview_id, b.interview_id);
  const auto batch = svc.next_events(a.interview_id, 0, 0ms);
  ASSERT_EQ(batch.events.size(), 1u);
  EXPECT_EQ(batch.events[0].type, "interviewer_turn");
  EXPECT_EQ(batch.events[0].seq, 0u);
}

TEST(Service, CreateValidatesPayload) {
  auto h = harness();
  InterviewService svc(h.ctx);
  EXPECT_EQ(code_of([&] { svc.create_interview({{"engine", {{"round_limit", 0}}}}); }), ErrorCode::InvalidConfig);
  EXPECT_EQ(code_of([&] { svc.create_interview({{"bogus", 1}}); }), ErrorCode::InvalidConfig);
  EXPECT_EQ(code_of([&] { svc.create_interview({{"seed", "x"}}); }), ErrorCode::InvalidConfig);
  EXPECT_EQ(code_of([&] { svc.create_interview(nlohmann::json::array()); }), ErrorCode::InvalidConfig);
}

TEST(Service, CapacityExceeded) {
  ServiceOptions opts;
  opts.max_interviews = 1;
  auto h = harness(2, 2, opts);
  InterviewService svc(h.ctx);
  svc.create_interview(nlohmann::json::object());
  EXPECT_EQ(code_of([&] { svc.create_interview(nlohmann::json::object()); }), ErrorCode::CapacityExceeded);
}

TEST(Service, PostTransitionsAndErrors) {
  auto h = harness();
  InterviewService svc(h.ctx);
  const auto id = svc.create_interview(nlohmann::json::object()).interview_id;
  EXPECT_EQ(code_of([&] { svc.post_user_turn("iv-9999", "x"); }), ErrorCode::UnknownId);
  EXPECT_EQ(code_of([&] { svc.post_user_turn(id, "   "); }), ErrorCode::EmptyText);

  h.backend->set_open(false);
  const auto after = svc.post_user_turn(id, dated_answer(0));
  EXPECT_EQ(after.status, InterviewStatus::Generating);
  EXPECT_EQ(code_of([&] { svc.post_user_turn(id, "again"); }), ErrorCode::WrongStatus);
  h.backend->set_open(true);
  EXPECT_TRUE(wait_status(svc, id, InterviewStatus::AwaitingUser));

  const auto hist = svc.status_history(id);
  ASSERT_GE(hist.size(), 3u);
  EXPECT_EQ(hist[0], InterviewStatus::Generating);
  EXPECT_EQ(hist[1], InterviewStatus::AwaitingUser);
  EXPECT_EQ(hist[2], InterviewStatus::Generating);
}

TEST(Service, FullInterviewEventsAndHistory) {
  auto h = harness(2, 2);
  InterviewService svc(h.ctx);
  const auto id = svc.create_interview(nlohmann::json::object()).interview_id;
  EXPECT_EQ(drive(svc, id), 4);
  ASSERT_TRUE(svc.wait_done(id, 5s));

  const auto all = svc.next_events(id, 0, 0ms);
  std::vector<std::string> types;
  for (std::size_t i = 0; i < all.events.size(); ++i) {
    EXPECT_EQ(all.events[i].seq, i);
    types.push_back(all.events[i].type);
  }
  const std::vector<std::string> session = {"interviewer_turn", "user_turn", "interviewer_turn", "user_turn",
                                            "summary_ready", "session_end"};
  std::vector<std::string> expected = session;
  expected.insert(expected.end(), session.begin(), session.end());
  expected.push_back("book_ready");
  expected.push_back("done");
  EXPECT_EQ(types, expected);

  // Replay from any cursor is the log's suffix.
  for (std::size_t c = 0; c <= all.events.size(); ++c) {
    const auto part = svc.next_events(id, c, 0ms);
    EXPECT_EQ(part.events, std::vector<ServerEvent>(all.events.begin() + static_cast<long>(c), all.events.end()));
  }

  const auto hist = svc.status_history(id);
  for (std::size_t i = 1; i < hist.size(); ++i) EXPECT_TRUE(transition_allowed(hist[i - 1], hist[i]));
  EXPECT_EQ(hist.back(), InterviewStatus::Done);
  EXPECT_NE(std::find(hist.begin(), hist.end(), InterviewStatus::BetweenSessions), hist.end());

  const auto art = svc.artifacts(id);
  EXPECT_EQ(art["chapters"].size(), 2u);
  EXPECT_EQ(art["sessions"].size(), 2u);
  EXPECT_EQ(art["summaries"].size(), 2u);
  EXPECT_EQ(art["status"], "done");
}

TEST(Service, CursorBeyondLatestTimesOut) {
  auto h = harness();
  InterviewService svc(h.ctx);
  const auto id = svc.create_interview(nlohmann::json::object()).interview_id;
  const auto start = std::chrono::steady_clock::now();
  const auto batch = svc.next_events(id, 1, 60ms);
  EXPECT_TRUE(batch.timed_out);
  EXPECT_TRUE(batch.events.empty());
  EXPECT_GE(std::chrono::steady_clock::now() - start, 50ms);
  EXPECT_EQ(code_of([&] { svc.next_events("nope", 0, 0ms); }), ErrorCode::UnknownId);
}

TEST(Service, MidSessionArtifactsArePartial) {
  auto h = harness(2, 3);
  InterviewService svc(h.ctx);
  const auto id = svc.create_interview(nlohmann::json::object()).interview_id;
  svc.post_user_turn(id, dated_answer(0));
  ASSERT_TRUE(wait_status(svc, id, InterviewStatus::AwaitingUser));
  const auto art = svc.artifacts(id);
  ASSERT_EQ(art["sessions"].size(), 1u);
  EXPECT_EQ(art["sessions"][0]["transcript"].size(), 3u);
  EXPECT_TRUE(art["chapters"].empty());
  EXPECT_EQ(art["cursor"], 3);
}

// Every snapshot agrees with the engine's graph at the cursor it was taken.
TEST(Service, SnapshotGraphMatchesEngine) {
  auto h = harness(3, 2);
  InterviewService* svc_ptr = nullptr;
  std::atomic<int> checks{0};
  std::atomic<int> mismatches{0};
  h.ctx.snapshot_hook = [&](const std::string& id, std::size_t cursor, std::size_t nodes) {
    nlohmann::json art;
    try {
      art = svc_ptr->artifacts(id);
    } catch (const Error&) {
      return;  // the service is shutting down
    }
    if (art["cursor"].get<std::size_t>() != cursor || art["graph"]["nodes"].size() != nodes) ++mismatches;
    ++checks;
  };
  InterviewService svc(h.ctx);
  svc_ptr = &svc;
  const auto id = svc.create_interview(nlohmann::json::object()).interview_id;
  drive(svc, id);
  ASSERT_TRUE(svc.wait_done(id, 5s));
  EXPECT_GT(checks.load(), 10);
  EXPECT_EQ(mismatches.load(), 0);
  EXPECT_GT(svc.artifacts(id)["graph"]["nodes"].size(), 0u);
}

TEST(Service, CloseEndsInterview) {
  auto h = harness(3, 2);
  InterviewService svc(h.ctx);
  const auto id = svc.create_interview(nlohmann::json::object()).interview_id;
  drive(svc, id, 1);
  ASSERT_TRUE(svc.wait_done(id, 5s));
  const auto all = svc.next_events(id, 0, 0ms);
  const bool closed = std::any_of(all.events.begin(), all.events.end(),
                                  [](const ServerEvent& e) { return e.type == "channel_closed"; });
  EXPECT_TRUE(closed);
  EXPECT_EQ(all.events.back().type, "done");
}

TEST(Jobs, RunPollAndErrors) {
  auto h = harness();
  h.ctx.prepare_job = [](JobKind kind, const nlohmann::json& payload) -> std::function<nlohmann::json()> {
    if (!payload.contains("n")) throw Error(ErrorCode::InvalidPayload, "n: required");
    const int n = payload["n"].get<int>();
    return [kind, n]() -> nlohmann::json {
      if (n < 0) throw Error(ErrorCode::InvalidRequest, "negative");
      return {{"kind", std::string(to_string(kind))}, {"double", 2 * n}};
    };
  };
  InterviewService svc(h.ctx);
  const auto ok = svc.run_job(JobKind::Evaluate, {{"n", 21}});
  ASSERT_TRUE(svc.wait_job(ok, 5s));
  const auto st = svc.poll_job(ok);
  EXPECT_EQ(st.status, JobStatus::Succeeded);
  EXPECT_EQ(st.result["double"], 42);
  EXPECT_EQ(st.result["kind"], "evaluate");

  const auto bad = svc.run_job(JobKind::Simulate, {{"n", -1}});
  ASSERT_TRUE(svc.wait_job(bad, 5s));
  EXPECT_EQ(svc.poll_job(bad).status, JobStatus::Failed);
  EXPECT_TRUE(svc.poll_job(bad).error);

  EXPECT_EQ(code_of([&] { svc.run_job(JobKind::Simulate, nlohmann::json::object()); }), ErrorCode::InvalidPayload);
  EXPECT_EQ(code_of([&] { svc.poll_job("job-9999"); }), ErrorCode::JobNotFound);
  EXPECT_EQ(job_kind_from_string("generate_book"), JobKind::GenerateBook);
  EXPECT_FALSE(job_kind_from_string("dance"));
}

TEST(Resume, RestartContinuesFromLog) {
  testkit::TempDir dir("service-resume");
  ServiceOptions opts;
  opts.state_dir = dir.path();
  std::string id;
  std::vector<ServerEvent> before;
  {
    auto h = harness(2, 2, opts);
    InterviewService svc(h.ctx);
    id = svc.create_interview({{"persona_id", "ann"}}).interview_id;
    svc.post_user_turn(id, dated_answer(0));
    ASSERT_TRUE(wait_status(svc, id, InterviewStatus::AwaitingUser));
    before = svc.next_events(id, 0, 0ms).events;
  }
  auto h = harness(2, 2, opts);
  InterviewService svc(h.ctx);
  EXPECT_EQ(svc.resume_from_disk(), 1u);
  ASSERT_TRUE(wait_status(svc, id, InterviewStatus::AwaitingUser));
  EXPECT_EQ(svc.handle(id).persona_id, "ann");
  const auto replayed = svc.next_events(id, 0, 0ms).events;
  EXPECT_EQ(replayed, before);
  drive(svc, id);
  ASSERT_TRUE(svc.wait_done(id, 5s));
  EXPECT_EQ(svc.artifacts(id)["sessions"].size(), 2u);
  const auto next = svc.create_interview(nlohmann::json::object()).interview_id;
  EXPECT_NE(next, id);
}

TEST(Http, StatusCodes) {
  EXPECT_EQ(http_status_for(ErrorCode::UnknownId), 404);
  EXPECT_EQ(http_status_for(ErrorCode::WrongStatus), 409);
  EXPECT_EQ(http_status_for(ErrorCode::CapacityExceeded), 429);
  EXPECT_EQ(http_status_for(ErrorCode::InvalidConfig), 400);
  EXPECT_EQ(http_status_for(ErrorCode::JobNotFound), 404);
}

class HttpFixture : public ::testing::Test {
 protected:
  void start(ServiceOptions opts = {}) {
    h_ = harness(2, 2, opts);
    h_.ctx.prepare_job = [](JobKind, const nlohmann::json&) -> std::function<nlohmann::json()> {
      return [] { return nlohmann::json{{"ok", true}}; };
    };
    svc_ = std::make_unique<InterviewService>(h_.ctx);
    api_ = std::make_unique<HttpApi>(*svc_);
    port_ = api_->bind("127.0.0.1", 0);
    thread_ = std::thread([this] { api_->listen(); });
    client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
    client_->set_read_timeout(10, 0);
    for (int i = 0; i < 200 && !client_->Get("/health"); ++i) std::this_thread::sleep_for(5ms);
  }
  void TearDown() override {
    if (api_) api_->stop();
    if (thread_.joinable()) thread_.join();
  }

  nlohmann::json post(const std::string& path, const nlohmann::json& body, int expect) {
    auto res = client_->Post(path, headers_, body.dump(), "application/json");
    EXPECT_TRUE(res);
    if (!res) return {};
    EXPECT_EQ(res->status, expect) << path << " " << res->body;
    return nlohmann::json::parse(res->body);
  }
  nlohmann::json get(const std::string& path, int expect) {
    auto res = client_->Get(path, headers_);
    EXPECT_TRUE(res);
    if (!res) return {};
    EXPECT_EQ(res->status, expect) << path << " " << res->body;
    return nlohmann::json::parse(res->body);
  }

  Harness h_;
  std::unique_ptr<InterviewService> svc_;
  std::unique_ptr<HttpApi> api_;
  std::thread thread_;
  std::unique_ptr<httplib::Client> client_;
  httplib::Headers headers_;
  int port_ = 0;
};

TEST_F(HttpFixture, InterviewRoundTrip) {
  start();
  const auto created = post("/interviews", {{"persona_id", "walter"}}, 201);
  const std::string id = created["interview_id"];
  EXPECT_EQ(created["status"], "awaiting_user");
  EXPECT_EQ(created["topic_ordinal"], 1);
  EXPECT_EQ(get("/interviews/" + id, 200)["persona_id"], "walter");

  const auto ev = get("/interviews/" + id + "/events?cursor=0&timeout_ms=0", 200);
  ASSERT_EQ(ev["events"].size(), 1u);
  EXPECT_EQ(ev["events"][0]["type"], "interviewer_turn");
  EXPECT_EQ(ev["next_cursor"], 1);

  const auto ack = post("/interviews/" + id + "/turns", {{"text", dated_answer(0)}}, 202);
  EXPECT_EQ(ack["status"], "generating");

  std::size_t cursor = 1;
  int answers = 1;
  for (int guard = 0; guard < 200; ++guard) {
    const auto batch = get("/interviews/" + id + "/events?cursor=" + std::to_string(cursor) + "&timeout_ms=2000", 200);
    cursor = batch["next_cursor"];
    if (batch["status"] == "done") break;
    if (batch["status"] == "awaiting_user") post("/interviews/" + id + "/turns", {{"text", dated_answer(answers++)}}, 202);
  }
  EXPECT_EQ(answers, 4);
  const auto art = get("/interviews/" + id + "/artifacts", 200);
  EXPECT_EQ(art["chapters"].size(), 2u);
  EXPECT_EQ(post("/interviews/" + id + "/turns", {{"text", "late"}}, 409)["code"], "wrong-status");
}

TEST_F(HttpFixture, ErrorBodies) {
  start();
  const auto missing = get("/interviews/iv-4242", 404);
  EXPECT_EQ(missing["code"], "unknown-id");
  EXPECT_TRUE(missing.contains("message"));
  EXPECT_EQ(post("/interviews", {{"engine", {{"round_limit", 0}}}}, 400)["code"], "invalid-config");
  auto res = client_->Post("/interviews", "{not json", "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);
  const auto id = post("/interviews", nlohmann::json::object(), 201)["interview_id"].get<std::string>();
  EXPECT_EQ(post("/interviews/" + id + "/turns", {{"nope", 1}}, 400)["code"], "invalid-payload");
  EXPECT_EQ(get("/interviews/" + id + "/events?cursor=abc", 400)["code"], "invalid-payload");
}

TEST_F(HttpFixture, Jobs) {
  start();
  const auto queued = post("/jobs", {{"kind", "evaluate"}, {"payload", nlohmann::json::object()}}, 202);
  const std::string job = queued["job_id"];
  ASSERT_TRUE(svc_->wait_job(job, 5s));
  const auto done = get("/jobs/" + job, 200);
  EXPECT_EQ(done["status"], "succeeded");
  EXPECT_EQ(done["result"]["ok"], true);
  EXPECT_EQ(get("/jobs/job-9999", 404)["code"], "job-not-found");
  EXPECT_EQ(post("/jobs", {{"kind", "dance"}}, 400)["code"], "invalid-payload");
}

TEST_F(HttpFixture, BearerToken) {
  ServiceOptions opts;
  opts.token = "s3cret";
  start(opts);
  EXPECT_EQ(post("/interviews", nlohmann::json::object(), 401)["code"], "unauthorized");
  headers_ = {{"Authorization", "Bearer s3cret"}};
  post("/interviews", nlohmann::json::object(), 201);
  auto health = client_->Get("/health");
  ASSERT_TRUE(health);
  EXPECT_EQ(health->status, 200);
}

TEST_F(HttpFixture, ServerSentEvents) {
  start();
  const std::string id = post("/interviews", nlohmann::json::object(), 201)["interview_id"];
  drive(*svc_, id);
  ASSERT_TRUE(svc_->wait_done(id, 5s));
  const auto count = svc_->next_events(id, 0, 0ms).events.size();

  std::string body;
  httplib::Headers hs = {{"Accept", "text/event-stream"}};
  auto res = client_->Get("/interviews/" + id + "/events?cursor=0&timeout_ms=100", hs,
                          [&](const char* data, std::size_t len) {
                            body.append(data, len);
                            return true;
                          });
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  std::size_t frames = 0;
  for (auto pos = body.find("\nevent: "); pos != std::string::npos; pos = body.find("\nevent: ", pos + 1)) ++frames;
  EXPECT_EQ(frames, count);
  EXPECT_NE(body.find("event: done"), std::string::npos);
  EXPECT_EQ(body.rfind("id: 0\n", 0), 0u);
}
