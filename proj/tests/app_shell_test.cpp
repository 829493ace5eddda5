#include <gtest/gtest.h>

#include <cstdlib>
#include <sstream>

#include "memoir/app_config.hpp"
#include "memoir/app_shell.hpp"
#include "memoir/error.hpp"
#include "memoir/record_io.hpp"
#include "memoir/text.hpp"
#include "test_support.hpp"

using namespace memoir;
namespace fs = std::filesystem;
using testkit::data_dir;
using testkit::fixture_dir;
using testkit::TempDir;

namespace {

nlohmann::json minimal_doc() {
  return {{"gateway", {{"kind", "mock"}, {"mock_script", (data_dir() / "mock/interview_script.json").string()}}}};
}

// Small run over both shipped personas; absolute paths so the file can live anywhere.
nlohmann::json sim_doc(const fs::path& out, int sessions) {
  auto doc = minimal_doc();
  doc["seed"] = 7;
  doc["output_dir"] = out.string();
  doc["engine"] = {{"round_limit", 3}, {"session_limit", sessions}};
  doc["personas"] = {{{"id", "walter"}, {"path", (data_dir() / "personas/walter_hale.txt").string()}},
                     {{"id", "rosa"}, {"path", (data_dir() / "personas/rosa_lind.txt").string()}}};
  doc["persona"] = {{"chunk_size", 80}, {"chunk_overlap", 10}, {"similarity_threshold", 0.3}};
  return doc;
}

fs::path write_config(const fs::path& dir, const nlohmann::json& doc) {
  const fs::path p = dir / "run.json";
  text::write_file(p, doc.dump(2));
  return p;
}

std::string field_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ValidationError) << e.what();
    const std::string msg = e.what();
    return msg.substr(0, msg.find(':'));
  }
  ADD_FAILURE() << "no error thrown";
  return {};
}

struct Cli {
  int code = 0;
  std::string out;
  std::string err;
};

Cli cli(std::vector<std::string> args) {
  args.insert(args.begin(), "memoir");
  std::ostringstream out, err;
  Cli r;
  r.code = run_cli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

}  // namespace

TEST(Config, Defaults) {
  const auto cfg = parse_config(minimal_doc(), fs::current_path());
  EXPECT_EQ(cfg.engine.round_limit, 10);
  EXPECT_EQ(cfg.engine.session_limit, 23);
  EXPECT_EQ(cfg.engine.params.max_new_tokens, 1024);
  EXPECT_EQ(cfg.engine.mode, EngineMode::Guided);
  EXPECT_EQ(cfg.parallel, 1);
  EXPECT_TRUE(cfg.generate_book);
  EXPECT_EQ(cfg.service.port, 8080);
  EXPECT_EQ(cfg.persona.chunking.size, 800u);
  EXPECT_EQ(cfg.persona.chunking.overlap, 100u);
  EXPECT_DOUBLE_EQ(cfg.persona.similarity_threshold, 0.67);
  EXPECT_TRUE(fs::exists(cfg.protocol_path));
}

TEST(Config, ShippedSimulateConfigLoads) {
  const auto cfg = load_config(data_dir() / "config/simulate.json");
  EXPECT_EQ(cfg.seed, 7u);
  ASSERT_EQ(cfg.personas.size(), 2u);
  EXPECT_EQ(cfg.personas[0].id, "walter");
  EXPECT_TRUE(cfg.output_dir.is_absolute());
  EXPECT_FALSE(cfg.source.empty());
}

TEST(Config, NegativeRoundsNamesField) {
  auto doc = minimal_doc();
  doc["engine"] = {{"rounds", -1}};
  EXPECT_EQ(field_of([&] { parse_config(doc, fs::current_path()); }), "engine.round_limit");
  doc["engine"] = {{"round_limit", -1}};
  EXPECT_EQ(field_of([&] { parse_config(doc, fs::current_path()); }), "engine.round_limit");
}

TEST(Config, FieldErrors) {
  auto check = [](nlohmann::json patch, const std::string& field) {
    auto doc = minimal_doc();
    doc.merge_patch(patch);
    EXPECT_EQ(field_of([&] { parse_config(doc, fs::current_path()); }), field) << patch.dump();
  };
  check({{"engine", {{"mode", "chatty"}}}}, "engine.mode");
  check({{"engine", {{"session_limit", 99}}}}, "engine.session_limit");
  check({{"engine", {{"bogus", 1}}}}, "engine.bogus");
  check({{"parallel", 0}}, "parallel");
  check({{"persona", {{"chunk_size", 10}, {"chunk_overlap", 10}}}}, "persona.chunk_overlap");
  check({{"persona", {{"similarity_threshold", 2.0}}}}, "persona.similarity_threshold");
  check({{"service", {{"port", 70000}}}}, "service.port");
  check({{"personas", {{{"id", "a"}, {"path", "/nonexistent/x.txt"}}}}}, "personas[0].path");
  check({{"detector", {{"kind", "scripted"}}}}, "detector.script");
  check({{"gateway", {{"kind", "remote"}, {"mock_script", nullptr}}}}, "gateway.remote.endpoint");
  check({{"extra", true}}, "extra");
  EXPECT_EQ(field_of([] { parse_config(nlohmann::json::object(), fs::current_path()); }), "gateway");
}

TEST(Config, DuplicatePersonaIds) {
  auto doc = minimal_doc();
  const auto p = (data_dir() / "personas/rosa_lind.txt").string();
  doc["personas"] = {{{"id", "a"}, {"path", p}}, {{"id", "a"}, {"path", p}}};
  EXPECT_EQ(field_of([&] { parse_config(doc, fs::current_path()); }), "personas[1].id");
}

TEST(Config, ParseErrors) {
  TempDir tmp("cfg");
  const fs::path bad = tmp.path() / "bad.json";
  text::write_file(bad, "{ not json");
  try {
    load_config(bad);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ParseError);
  }
  try {
    load_config(tmp.path() / "missing.json");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ParseError);
  }
}

TEST(Config, RelativePathsResolveAgainstFile) {
  TempDir tmp("cfg");
  fs::create_directories(tmp.path() / "sub");
  fs::copy_file(data_dir() / "mock/interview_script.json", tmp.path() / "sub/script.json");
  const auto path = write_config(tmp.path(), {{"mock_script", "sub/script.json"}, {"output_dir", "o"}});
  const auto cfg = load_config(path);
  EXPECT_EQ(cfg.gateway.mock_script, (tmp.path() / "sub/script.json").lexically_normal());
  EXPECT_EQ(cfg.output_dir, (tmp.path() / "o").lexically_normal());
}

TEST(Env, Interpolation) {
  ::setenv("MEMOIR_TEST_TOKEN", "s3cret", 1);
  ::unsetenv("MEMOIR_TEST_UNSET");
  EXPECT_EQ(interpolate_env("Bearer ${MEMOIR_TEST_TOKEN}!", "f"), "Bearer s3cret!");
  EXPECT_EQ(interpolate_env("${MEMOIR_TEST_TOKEN}${MEMOIR_TEST_TOKEN}", "f"), "s3crets3cret");
  EXPECT_EQ(interpolate_env("plain $HOME {x}", "f"), "plain $HOME {x}");
  EXPECT_EQ(field_of([] { interpolate_env("${MEMOIR_TEST_UNSET}", "service.token"); }), "service.token");
  EXPECT_EQ(field_of([] { interpolate_env("${OPEN", "x"); }), "x");

  auto doc = minimal_doc();
  doc["service"] = {{"token", "${MEMOIR_TEST_TOKEN}"}};
  EXPECT_EQ(parse_config(doc, fs::current_path()).service.token, "s3cret");
  doc["service"] = {{"token", "${MEMOIR_TEST_UNSET}"}};
  EXPECT_EQ(field_of([&] { parse_config(doc, fs::current_path()); }), "service.token");
}

TEST(Env, SnapshotHasNoSecrets) {
  ::setenv("MEMOIR_TEST_KEY", "key-xyz", 1);
  auto doc = minimal_doc();
  doc["judge_gateway"] = {{"kind", "remote"}, {"remote", {{"endpoint", "http://h"}, {"api_key", "${MEMOIR_TEST_KEY}"}}}};
  doc["service"] = {{"token", "tok-abc"}};
  const auto cfg = parse_config(doc, fs::current_path());
  EXPECT_EQ(cfg.judge_gateway->remote.api_key, "key-xyz");
  const auto dumped = config_snapshot(cfg).dump();
  EXPECT_EQ(dumped.find("key-xyz"), std::string::npos);
  EXPECT_EQ(dumped.find("tok-abc"), std::string::npos);
}

TEST(Engine, JsonRoundTrip) {
  nlohmann::json e = {{"round_limit", 4}, {"session_limit", 5}, {"mode", "baseline"}, {"temperature", 0.5}};
  const auto cfg = parse_engine_config(e);
  const auto back = parse_engine_config(engine_config_json(cfg));
  EXPECT_EQ(engine_config_json(back), engine_config_json(cfg));
  EXPECT_EQ(back.mode, EngineMode::Baseline);
  EXPECT_EQ(field_of([] { parse_engine_config({{"round_limit", 0}}, "defaults"); }), "defaults.round_limit");
}

TEST(Overrides, Apply) {
  auto cfg = parse_config(minimal_doc(), fs::current_path());
  ShellArgs a;
  a.out = "/tmp/x";
  a.seed = 99;
  a.parallel = 3;
  a.mode = EngineMode::Baseline;
  a.port = 0;
  apply_overrides(cfg, a);
  EXPECT_EQ(cfg.output_dir, fs::path("/tmp/x"));
  EXPECT_EQ(cfg.seed, 99u);
  EXPECT_EQ(cfg.parallel, 3);
  EXPECT_EQ(cfg.engine.mode, EngineMode::Baseline);
  EXPECT_EQ(cfg.service.port, 0);

  ShellArgs bad;
  bad.parallel = 0;
  EXPECT_THROW(apply_overrides(cfg, bad), Error);

  // Absent flags leave the config alone.
  const auto before = config_snapshot(cfg);
  apply_overrides(cfg, ShellArgs{});
  EXPECT_EQ(config_snapshot(cfg), before);
}

TEST(Cli, UsageAndUnknownSubcommand) {
  const auto none = cli({});
  EXPECT_EQ(none.code, 2);
  EXPECT_NE(none.err.find("usage: memoir"), std::string::npos);

  const auto help = cli({"--help"});
  EXPECT_EQ(help.code, 0);
  for (const char* s : kSubcommands) EXPECT_NE(help.out.find(s), std::string::npos) << s;

  const auto bogus = cli({"bogus"});
  EXPECT_EQ(bogus.code, 2);
  EXPECT_NE(bogus.err.find("unknown subcommand: bogus"), std::string::npos);
  EXPECT_NE(bogus.err.find("usage:"), std::string::npos);

  std::ostringstream out, err;
  EXPECT_EQ(dispatch("bogus", RunConfig{}, ShellArgs{}, out, err), 2);
}

TEST(Cli, FlagErrors) {
  EXPECT_EQ(cli({"simulate"}).code, 2);  // --config is required
  const auto cfg = (data_dir() / "config/simulate.json").string();
  EXPECT_EQ(cli({"simulate", "--config", cfg, "--mode", "chatty"}).code, 2);
  EXPECT_EQ(cli({"simulate", "--config", cfg, "--parallel", "0"}).code, 2);
  EXPECT_EQ(cli({"serve", "--config", cfg, "--port", "70000"}).code, 2);

  const auto missing = cli({"simulate", "--config", "/nonexistent/run.json"});
  EXPECT_EQ(missing.code, 1);
  EXPECT_NE(missing.err.find("parse-error"), std::string::npos);
}

TEST(Cli, MissingInputIsIoError) {
  const auto r = cli({"stats", "--config", (data_dir() / "config/simulate.json").string(), "/nonexistent/record.json"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("io-error"), std::string::npos);
}

TEST(Cli, SimulateThenStatsAndBooks) {
  TempDir tmp("sim");
  const auto out = tmp.path() / "out";
  const auto path = write_config(tmp.path(), sim_doc(out, 2));

  const auto sim = cli({"simulate", "--config", path.string(), "--parallel", "2"});
  ASSERT_EQ(sim.code, 0) << sim.err;
  EXPECT_NE(sim.out.find("walter: 2 sessions, 2 chapters"), std::string::npos) << sim.out;
  EXPECT_NE(sim.out.find("rosa: 2 sessions"), std::string::npos);
  for (const char* id : {"walter", "rosa"}) {
    for (const char* f : {BundleLayout::kRecord, BundleLayout::kGraph, BundleLayout::kSummaries,
                          BundleLayout::kTranscripts, BundleLayout::kBookJson, BundleLayout::kBookMarkdown}) {
      EXPECT_TRUE(fs::exists(out / id / f)) << id << "/" << f;
    }
  }
  const auto manifest = read_json_file(out / "manifest.json");
  EXPECT_EQ(manifest["seed"], 7);
  ASSERT_EQ(manifest["interviews"].size(), 2u);
  EXPECT_EQ(manifest["interviews"][0]["record"], "walter/record.json");

  const auto rec = load_record(out / "walter" / BundleLayout::kRecord);
  EXPECT_EQ(rec.seed, 7u);
  EXPECT_EQ(rec.config_snapshot["engine"]["round_limit"], 3);

  const auto st = cli({"stats", "--config", path.string(), (out / "walter/record.json").string(),
                       (out / "rosa/record.json").string()});
  ASSERT_EQ(st.code, 0) << st.err;
  EXPECT_NE(st.out.find("sessions 4"), std::string::npos) << st.out;
  const auto stats = read_json_file(out / "stats.json");
  EXPECT_EQ(stats["sessions"], 4);
  std::size_t turns = 0;
  for (const char* id : {"walter", "rosa"}) {
    for (const auto& s : load_record(out / id / BundleLayout::kRecord).sessions) turns += s.transcript.size();
  }
  EXPECT_EQ(stats["turns_total"].get<std::size_t>(), turns);

  const auto books_dir = tmp.path() / "books";
  const auto gb = cli({"generate-book", "--config", path.string(), "--out", books_dir.string(),
                       (out / "rosa/record.json").string()});
  ASSERT_EQ(gb.code, 0) << gb.err;
  EXPECT_TRUE(fs::exists(books_dir / "rosa" / BundleLayout::kBookMarkdown));
  EXPECT_EQ(text::read_file(books_dir / "rosa" / BundleLayout::kBookMarkdown),
            text::read_file(out / "rosa" / BundleLayout::kBookMarkdown));
}

TEST(Cli, SimulateIsSeedDeterministicAcrossWidths) {
  TempDir tmp("det");
  const auto path = write_config(tmp.path(), sim_doc(tmp.path() / "unused", 1));
  const auto a = tmp.path() / "a";
  const auto b = tmp.path() / "b";
  ASSERT_EQ(cli({"simulate", "--config", path.string(), "--out", a.string()}).code, 0);
  ASSERT_EQ(cli({"simulate", "--config", path.string(), "--out", b.string(), "--parallel", "2"}).code, 0);
  for (const char* id : {"walter", "rosa"}) {
    for (const char* f : {BundleLayout::kTranscripts, BundleLayout::kBookMarkdown, BundleLayout::kGraph}) {
      EXPECT_EQ(text::read_file(a / id / f), text::read_file(b / id / f)) << id << "/" << f;
    }
  }
}

TEST(Cli, EvaluateFromMetricsFixture) {
  TempDir tmp("eval");
  auto doc = minimal_doc();
  doc["seed"] = 11;
  doc["output_dir"] = (tmp.path() / "report").string();
  doc["evaluation"] = {{"metrics_fixture", (fixture_dir() / "metrics.json").string()}};
  const auto path = write_config(tmp.path(), doc);

  const auto r = cli({"evaluate", "--config", path.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("| Coverage | 85.7 |"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("| Precision | 75.0 |"), std::string::npos);

  const auto report = read_json_file(tmp.path() / "report/report.json");
  EXPECT_NEAR(report["coverage"].get<double>(), 600.0 / 7.0, 1e-9);
  EXPECT_EQ(report["judge"]["comforting"]["wins"], 20);
  EXPECT_EQ(report["config"]["seed"], 11);
  EXPECT_TRUE(fs::exists(tmp.path() / "report/report.md"));
}

TEST(Cli, EvaluateWithoutRecordsFails) {
  TempDir tmp("eval");
  auto doc = minimal_doc();
  doc["output_dir"] = tmp.path().string();
  const auto r = cli({"evaluate", "--config", write_config(tmp.path(), doc).string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("validation-error"), std::string::npos) << r.err;
}

TEST(Cli, SimulateWithoutPersonasFails) {
  TempDir tmp("np");
  auto doc = minimal_doc();
  doc["output_dir"] = tmp.path().string();
  const auto r = cli({"simulate", "--config", write_config(tmp.path(), doc).string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("personas"), std::string::npos);
}

TEST(RecordMode, FromSnapshot) {
  InterviewRecord r;
  EXPECT_EQ(record_mode(r), EngineMode::Guided);
  r.config_snapshot = {{"engine", {{"mode", "baseline"}}}};
  EXPECT_EQ(record_mode(r), EngineMode::Baseline);
}

TEST(ServiceContext, Jobs) {
  TempDir tmp("ctx");
  auto doc = sim_doc(tmp.path() / "out", 1);
  doc["evaluation"] = {{"metrics_fixture", (fixture_dir() / "metrics.json").string()}};
  const auto cfg = load_config(write_config(tmp.path(), doc));
  const auto ctx = make_service_context(cfg);
  EXPECT_EQ(ctx.seed, 7u);
  EXPECT_EQ(ctx.default_engine.session_limit, 1);

  auto code = [&](JobKind k, const nlohmann::json& payload) {
    try {
      ctx.prepare_job(k, payload);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::IoError;  // sentinel: accepted
  };
  EXPECT_EQ(code(JobKind::Simulate, {{"seed", "x"}}), ErrorCode::InvalidPayload);
  EXPECT_EQ(code(JobKind::Simulate, {{"mode", "loud"}}), ErrorCode::InvalidPayload);
  EXPECT_EQ(code(JobKind::Simulate, {{"what", 1}}), ErrorCode::InvalidPayload);
  EXPECT_EQ(code(JobKind::Simulate, nlohmann::json::array()), ErrorCode::InvalidPayload);
  EXPECT_EQ(code(JobKind::GenerateBook, nlohmann::json::object()), ErrorCode::InvalidPayload);
  EXPECT_EQ(code(JobKind::GenerateBook, {{"records", {"/nonexistent.json"}}}), ErrorCode::InvalidPayload);

  const auto eval = ctx.prepare_job(JobKind::Evaluate, {{"out", (tmp.path() / "ev").string()}})();
  EXPECT_NEAR(eval["coverage"].get<double>(), 600.0 / 7.0, 1e-9);

  const auto sim = ctx.prepare_job(JobKind::Simulate, {{"seed", 3}, {"out", (tmp.path() / "s3").string()}})();
  EXPECT_EQ(sim["seed"], 3);
  ASSERT_EQ(sim["records"].size(), 2u);
  EXPECT_EQ(sim["records"][1]["sessions"], 1);
  EXPECT_TRUE(fs::exists(tmp.path() / "s3/rosa/record.json"));

  const auto book = ctx.prepare_job(
      JobKind::GenerateBook, {{"records", {(tmp.path() / "s3/rosa/record.json").string()}},
                              {"out", (tmp.path() / "gb").string()}})();
  ASSERT_EQ(book["books"].size(), 1u);
  EXPECT_TRUE(fs::exists(book["books"][0].get<std::string>()));
}
