#include "memoir/app_shell.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <future>
#include <iostream>
#include <set>

#include "memoir/autobiographer.hpp"
#include "memoir/error.hpp"
#include "memoir/record_io.hpp"
#include "memoir/text.hpp"
#include "memoir/user_proxy.hpp"

namespace memoir {

namespace fs = std::filesystem;

std::string usage_text() {
  return "usage: memoir <subcommand> [--config PATH] [--out DIR] [--seed N] [--parallel K] "
         "[--mode guided|baseline] [inputs...]\n"
         "\n"
         "subcommands:\n"
         "  serve           start the HTTP API\n"
         "  simulate        run proxy interviews for every configured persona\n"
         "  interview       chat with the interviewer in this terminal\n"
         "  evaluate        compute metrics for interview records\n"
         "  generate-book   write autobiographies for interview records\n"
         "  stats           conversation statistics for interview records\n";
}

void apply_overrides(RunConfig& cfg, const ShellArgs& args) {
  if (args.out) cfg.output_dir = *args.out;
  if (args.seed) cfg.seed = *args.seed;
  if (args.parallel) {
    if (*args.parallel < 1) throw Error(ErrorCode::ValidationError, "parallel: must be at least 1");
    cfg.parallel = *args.parallel;
  }
  if (args.mode) cfg.engine.mode = *args.mode;
  if (args.port) cfg.service.port = *args.port;
}

EngineMode record_mode(const InterviewRecord& record) {
  const auto& snap = record.config_snapshot;
  if (snap.contains("engine") && snap["engine"].contains("mode")) {
    if (auto m = engine_mode_from_string(snap["engine"]["mode"].get<std::string>())) return *m;
  }
  return EngineMode::Guided;
}

namespace {


nlohmann::json run_snapshot(const RunConfig& cfg) {
  auto snap = config_snapshot(cfg);
  snap["seed"] = cfg.seed;
  return snap;
}

std::map<std::string, std::string> book_front_matter(const InterviewRecord& record) {
  return {{"interview_id", record.interview_id},
          {"mode", std::string(to_string(record_mode(record)))},
          {"seed", std::to_string(record.seed)},
          {"config", record.config_snapshot.dump()},
          {"title", "Autobiography of " + record.persona_id}};
}

Autobiography book_for(const InterviewRecord& record, const InterviewProtocol& protocol, Gateway& gateway) {
  Autobiography book = write_book(record, protocol, record_mode(record), gateway);
  for (auto& [k, v] : book_front_matter(record)) book.front_matter[k] = v;
  return book;
}

SimulationOutput simulate_one(const RunConfig& cfg, const PersonaSource& src, const InterviewProtocol& protocol) {
  auto gateway = make_gateway(cfg.gateway, cfg.seed);
  auto proxy_gateway = cfg.proxy_gateway ? make_gateway(*cfg.proxy_gateway, cfg.seed) : gateway;
  const std::string source_text = text::read_file(src.path);
  auto persona = std::make_shared<const ProxyPersona>(
      load_or_build_persona(src.id, source_text, *proxy_gateway, cfg.persona, cfg.output_dir / "cache"));

  ProxyChannel channel(persona, proxy_gateway, cfg.persona.params);
  EngineDeps deps{gateway, make_detector(cfg.detector, gateway), nullptr};

  const fs::path dir = cfg.output_dir / src.id;
  InterviewOptions opts;
  opts.interview_id = src.id + "-" + std::to_string(cfg.seed);
  opts.persona_id = src.id;
  opts.seed = cfg.seed;
  opts.config_snapshot = run_snapshot(cfg);
  opts.persist = [&dir](const InterviewRecord& r) { write_json_file(dir / BundleLayout::kRecord, to_json(r)); };

  InterviewRecord record = run_interview(cfg.engine, protocol, channel, deps, opts);
  std::optional<Autobiography> book;
  if (cfg.generate_book && !record.sessions.empty()) book = book_for(record, protocol, *gateway);
  write_record_bundle(dir, record, book);
  return {src.id, dir / BundleLayout::kRecord, record.complete, record.sessions.size(),
          book ? book->chapters.size() : 0};
}

std::vector<InterviewRecord> load_records(const std::vector<fs::path>& paths) {
  std::vector<InterviewRecord> out;
  out.reserve(paths.size());
  for (const auto& p : paths) out.push_back(load_record(p));
  return out;
}

std::optional<Autobiography> sibling_book(const fs::path& record_path) {
  const fs::path p = record_path.parent_path() / BundleLayout::kBookJson;
  if (!fs::exists(p)) return std::nullopt;
  const auto doc = read_json_file(p);
  return autobiography_from_json(doc.contains("book") ? doc["book"] : doc);
}

const PersonaSource* persona_source(const RunConfig& cfg, const std::string& id) {
  for (const auto& p : cfg.personas) {
    if (p.id == id) return &p;
  }
  return nullptr;
}

std::vector<JudgeItem> conversation_items(const std::vector<InterviewRecord>& records) {
  std::vector<JudgeItem> out;
  for (const auto& r : records) {
    for (const auto& s : r.sessions) {
      if (!s.transcript.empty()) out.push_back({r.interview_id + "/" + s.session_id, format_transcript(s.transcript)});
    }
  }
  return out;
}

std::vector<JudgeItem> chapter_items(const std::vector<InterviewRecord>& records, const std::vector<fs::path>& paths) {
  std::vector<JudgeItem> out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto book = sibling_book(paths[i]);
    if (!book) continue;
    for (const auto& c : book->chapters) {
      out.push_back({records[i].interview_id + "/chapter-" + std::to_string(c.ordinal), c.title + "\n\n" + c.body});
    }
  }
  return out;
}

bool is_book_dimension(JudgeDimension d) {
  return d == JudgeDimension::Insightfulness || d == JudgeDimension::Narrativity ||
         d == JudgeDimension::EmotionalImpact;
}

void write_report(const RunConfig& cfg, const MetricReport& report) {
  auto doc = to_json(report);
  doc["config"] = run_snapshot(cfg);
  write_json_file(cfg.output_dir / "report.json", doc);
  text::write_file(cfg.output_dir / "report.md", render_markdown(report));
}

std::vector<fs::path> payload_paths(const nlohmann::json& payload, const std::string& key, const fs::path& base) {
  std::vector<fs::path> out;
  if (!payload.contains(key)) return out;
  if (!payload[key].is_array()) throw Error(ErrorCode::InvalidPayload, key + ": expected an array of paths");
  for (const auto& v : payload[key]) {
    if (!v.is_string()) throw Error(ErrorCode::InvalidPayload, key + ": expected an array of paths");
    fs::path p(v.get<std::string>());
    if (p.is_relative()) p = base / p;
    if (!fs::exists(p)) throw Error(ErrorCode::InvalidPayload, key + ": no such file " + p.string());
    out.push_back(p);
  }
  return out;
}

void reject_unknown(const nlohmann::json& payload, std::initializer_list<const char*> allowed) {
  if (!payload.is_object()) throw Error(ErrorCode::InvalidPayload, "payload must be a JSON object");
  for (const auto& [k, _] : payload.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return k == a; })) {
      throw Error(ErrorCode::InvalidPayload, k + ": unknown field");
    }
  }
}

}  // namespace

std::vector<SimulationOutput> simulate_personas(const RunConfig& cfg) {
  if (cfg.personas.empty()) throw Error(ErrorCode::ValidationError, "personas: at least one persona is required");
  const auto protocol = load_protocol(cfg.protocol_path);
  fs::create_directories(cfg.output_dir);

  // Personas are independent; every artifact depends only on its own inputs,
  // so the fan-out width never changes the output.
  std::vector<SimulationOutput> results(cfg.personas.size());
  const std::size_t width = static_cast<std::size_t>(std::max(1, cfg.parallel));
  for (std::size_t begin = 0; begin < cfg.personas.size(); begin += width) {
    const std::size_t end = std::min(cfg.personas.size(), begin + width);
    std::vector<std::future<SimulationOutput>> batch;
    for (std::size_t i = begin; i < end; ++i) {
      batch.push_back(std::async(std::launch::async, [&, i] { return simulate_one(cfg, cfg.personas[i], protocol); }));
    }
    for (std::size_t i = begin; i < end; ++i) results[i] = batch[i - begin].get();
  }

  nlohmann::json manifest = {{"config", run_snapshot(cfg)}, {"seed", cfg.seed}};
  manifest["interviews"] = nlohmann::json::array();
  for (const auto& r : results) {
    manifest["interviews"].push_back({{"persona_id", r.persona_id},
                                      {"record", fs::relative(r.record_path, cfg.output_dir).generic_string()},
                                      {"complete", r.complete},
                                      {"sessions", r.sessions},
                                      {"chapters", r.chapters}});
  }
  write_json_file(cfg.output_dir / "manifest.json", manifest);
  return results;
}

MetricReport evaluate_records(const RunConfig& cfg, const std::vector<fs::path>& record_paths,
                              const std::vector<fs::path>& opponent_paths) {
  MetricReport report;
  report.seed = cfg.seed;
  const auto& ev = cfg.evaluation;

  if (ev.metrics_fixture) {
    report = report_from_fixture(read_json_file(*ev.metrics_fixture));
    report.seed = cfg.seed;
    write_report(cfg, report);
    return report;
  }
  if (record_paths.empty()) throw Error(ErrorCode::ValidationError, "evaluation.records: no records to evaluate");

  const auto records = load_records(record_paths);
  auto gateway = make_gateway(cfg.gateway, cfg.seed);
  auto judge = cfg.judge_gateway ? make_gateway(*cfg.judge_gateway, cfg.seed) : gateway;

  // Interviewing quality, macro-averaged over personas that have a source text.
  std::vector<std::size_t> event_counts;
  double coverage_sum = 0.0;
  CorrectnessScores correctness_sum;
  std::size_t scored = 0;
  for (const auto& r : records) {
    const EventSet intw = interview_events(r, record_mode(r), *gateway, cfg.engine.aux_params);
    event_counts.push_back(intw.events.size());
    const PersonaSource* src = persona_source(cfg, r.persona_id);
    if (!src || !ev.correctness || intw.events.empty()) continue;
    const EventSet gt = extract_ground_truth(text::read_file(src->path), *judge);
    if (gt.events.empty()) continue;
    const EventSet correct = select_correct(intw, r.sessions, *judge);
    coverage_sum += coverage(intw, gt);
    const auto s = correctness_scores(intw, correct, gt);
    correctness_sum.precision += s.precision;
    correctness_sum.recall += s.recall;
    correctness_sum.f1 += s.f1;
    report.gt_events += gt.events.size();
    report.interview_events += intw.events.size();
    report.correct_events += correct.events.size();
    ++scored;
  }
  if (scored > 0) {
    const double n = static_cast<double>(scored);
    report.coverage_pct = coverage_sum / n;
    report.correctness = CorrectnessScores{correctness_sum.precision / n, correctness_sum.recall / n,
                                           correctness_sum.f1 / n};
  }

  if (!opponent_paths.empty()) {
    const auto opponents = load_records(opponent_paths);
    const auto ours_conv = conversation_items(records);
    const auto theirs_conv = conversation_items(opponents);
    const auto ours_book = chapter_items(records, record_paths);
    const auto theirs_book = chapter_items(opponents, opponent_paths);
    for (std::size_t i = 0; i < ev.dimensions.size(); ++i) {
      const auto d = ev.dimensions[i];
      const bool book = is_book_dimension(d);
      const auto& ours = book ? ours_book : ours_conv;
      const auto& theirs = book ? theirs_book : theirs_conv;
      if (ours.empty() || theirs.empty()) continue;
      const auto verdicts = judge_against_random_opponents(ours, theirs, d, *judge, cfg.seed + i);
      for (const auto& [dim, counts] : win_loss_rates(verdicts)) report.judge[dim] = counts;
    }
  }

  std::vector<Transcript> transcripts;
  for (const auto& r : records) {
    for (const auto& s : r.sessions) transcripts.push_back(s.transcript);
  }
  const auto marks = ev.round_annotations ? load_round_annotations(read_json_file(*ev.round_annotations))
                                          : repetition_marks(transcripts);
  try {
    report.valid_round_pct = valid_round_stats(transcripts, marks);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::ZeroTotal) throw;
  }

  report.stats = conversation_stats(records, gateway->tokenizer(), event_counts);

  if (!ev.empathy_off.empty()) report.emotions = emotion_distribution(records, load_records(ev.empathy_off));

  write_report(cfg, report);
  return report;
}

std::vector<fs::path> generate_books(const RunConfig& cfg, const std::vector<fs::path>& record_paths) {
  if (record_paths.empty()) throw Error(ErrorCode::ValidationError, "generate-book: no records given");
  const auto protocol = load_protocol(cfg.protocol_path);
  auto gateway = make_gateway(cfg.gateway, cfg.seed);
  std::vector<fs::path> written;
  for (const auto& path : record_paths) {
    const auto record = load_record(path);
    const auto book = book_for(record, protocol, *gateway);
    const fs::path dir = cfg.output_dir / record.persona_id;
    nlohmann::json doc = {{"seed", record.seed}, {"config", record.config_snapshot}, {"book", to_json(book)}};
    write_json_file(dir / BundleLayout::kBookJson, doc);
    text::write_file(dir / BundleLayout::kBookMarkdown, export_markdown(book));
    written.push_back(dir / BundleLayout::kBookMarkdown);
  }
  return written;
}

ConversationStats stats_for_records(const RunConfig& cfg, const std::vector<fs::path>& record_paths) {
  if (record_paths.empty()) throw Error(ErrorCode::ValidationError, "stats: no records given");
  const auto records = load_records(record_paths);
  const auto stats = conversation_stats(records, default_tokenizer());
  nlohmann::json doc = {{"seed", cfg.seed},
                        {"config", run_snapshot(cfg)},
                        {"sessions", stats.sessions},
                        {"turns_total", stats.turns_total},
                        {"tokens_total", stats.tokens_total},
                        {"tokens_per_conv_avg", stats.tokens_per_conv_avg},
                        {"events_total", stats.events_total},
                        {"event_token_usage_avg", stats.event_token_usage_avg}};
  write_json_file(cfg.output_dir / "stats.json", doc);
  return stats;
}

ServiceContext make_service_context(const RunConfig& cfg) {
  ServiceContext ctx;
  ctx.protocol = load_protocol(cfg.protocol_path);
  ctx.default_engine = cfg.engine;
  ctx.options = cfg.service;
  ctx.config_snapshot = run_snapshot(cfg);
  ctx.seed = cfg.seed;
  ctx.generate_book = cfg.generate_book;
  ctx.make_deps = [cfg](std::uint64_t seed) {
    auto gateway = make_gateway(cfg.gateway, seed);
    return EngineDeps{gateway, make_detector(cfg.detector, gateway), nullptr};
  };
  const fs::path base = cfg.source.empty() ? fs::current_path() : cfg.source.parent_path();
  ctx.prepare_job = [cfg, base](JobKind kind, const nlohmann::json& payload) -> std::function<nlohmann::json()> {
    RunConfig job_cfg = cfg;
    switch (kind) {
      case JobKind::Simulate: {
        reject_unknown(payload, {"seed", "mode", "out"});
        if (payload.contains("seed")) {
          const auto& sv = payload["seed"];
          if (!sv.is_number_integer() || sv.get<std::int64_t>() < 0) throw Error(ErrorCode::InvalidPayload, "seed: expected an integer");
          job_cfg.seed = payload["seed"].get<std::uint64_t>();
        }
        if (payload.contains("mode")) {
          auto m = payload["mode"].is_string() ? engine_mode_from_string(payload["mode"].get<std::string>())
                                               : std::nullopt;
          if (!m) throw Error(ErrorCode::InvalidPayload, "mode: expected guided or baseline");
          job_cfg.engine.mode = *m;
        }
        if (payload.contains("out")) {
          if (!payload["out"].is_string()) throw Error(ErrorCode::InvalidPayload, "out: expected a path");
          fs::path p(payload["out"].get<std::string>());
          job_cfg.output_dir = p.is_relative() ? base / p : p;
        }
        if (job_cfg.personas.empty()) throw Error(ErrorCode::InvalidPayload, "no personas configured");
        return [job_cfg] {
          nlohmann::json records = nlohmann::json::array();
          for (const auto& r : simulate_personas(job_cfg)) {
            records.push_back({{"persona_id", r.persona_id}, {"record", r.record_path.string()},
                               {"complete", r.complete}, {"sessions", r.sessions}});
          }
          return nlohmann::json{{"records", records}, {"seed", job_cfg.seed}};
        };
      }
      case JobKind::Evaluate: {
        reject_unknown(payload, {"records", "opponents", "out"});
        auto records = payload_paths(payload, "records", base);
        auto opponents = payload_paths(payload, "opponents", base);
        if (records.empty()) records = cfg.evaluation.records;
        if (opponents.empty()) opponents = cfg.evaluation.opponents;
        if (records.empty() && !cfg.evaluation.metrics_fixture) {
          throw Error(ErrorCode::InvalidPayload, "records: at least one record is required");
        }
        if (payload.contains("out") && payload["out"].is_string()) {
          fs::path p(payload["out"].get<std::string>());
          job_cfg.output_dir = p.is_relative() ? base / p : p;
        }
        return [job_cfg, records, opponents] {
          auto doc = to_json(evaluate_records(job_cfg, records, opponents));
          return doc;
        };
      }
      case JobKind::GenerateBook: {
        reject_unknown(payload, {"records", "out"});
        const auto records = payload_paths(payload, "records", base);
        if (records.empty()) throw Error(ErrorCode::InvalidPayload, "records: at least one record is required");
        if (payload.contains("out") && payload["out"].is_string()) {
          fs::path p(payload["out"].get<std::string>());
          job_cfg.output_dir = p.is_relative() ? base / p : p;
        }
        return [job_cfg, records] {
          nlohmann::json books = nlohmann::json::array();
          for (const auto& p : generate_books(job_cfg, records)) books.push_back(p.string());
          return nlohmann::json{{"books", books}};
        };
      }
    }
    throw Error(ErrorCode::InvalidPayload, "unknown job kind");
  };
  return ctx;
}

int dispatch(const std::string& subcommand, const RunConfig& cfg, const ShellArgs& args, std::ostream& out,
             std::ostream& err) {
  const bool known = std::any_of(std::begin(kSubcommands), std::end(kSubcommands),
                                 [&](const char* s) { return subcommand == s; });
  if (!known) {
    err << "unknown subcommand: " << subcommand << "\n" << usage_text();
    return 2;
  }
  try {
    std::vector<fs::path> inputs;
    for (const auto& s : args.inputs) {
      if (!fs::exists(s)) throw Error(ErrorCode::IoError, "no such file: " + s);
      inputs.emplace_back(s);
    }

    if (subcommand == "simulate") {
      for (const auto& r : simulate_personas(cfg)) {
        out << r.persona_id << ": " << r.sessions << " sessions, " << r.chapters << " chapters -> "
            << r.record_path.string() << "\n";
      }
      return 0;
    }
    if (subcommand == "interview") {
      const auto protocol = load_protocol(cfg.protocol_path);
      auto gateway = make_gateway(cfg.gateway, cfg.seed);
      EngineDeps deps{gateway, make_detector(cfg.detector, gateway), nullptr};
      TerminalChannel channel(std::cin, out);
      InterviewOptions opts;
      opts.interview_id = "terminal-" + std::to_string(cfg.seed);
      opts.persona_id = "terminal";
      opts.seed = cfg.seed;
      opts.config_snapshot = run_snapshot(cfg);
      const fs::path dir = cfg.output_dir / "terminal";
      opts.persist = [&dir](const InterviewRecord& r) { write_json_file(dir / BundleLayout::kRecord, to_json(r)); };
      const auto record = run_interview(cfg.engine, protocol, channel, deps, opts);
      std::optional<Autobiography> book;
      if (cfg.generate_book && !record.sessions.empty()) book = book_for(record, protocol, *gateway);
      write_record_bundle(dir, record, book);
      out << "\nsaved " << record.sessions.size() << " sessions to " << dir.string() << "\n";
      return 0;
    }
    if (subcommand == "evaluate") {
      const auto records = inputs.empty() ? cfg.evaluation.records : inputs;
      const auto report = evaluate_records(cfg, records, cfg.evaluation.opponents);
      out << render_markdown(report);
      return 0;
    }
    if (subcommand == "generate-book") {
      for (const auto& p : generate_books(cfg, inputs.empty() ? cfg.evaluation.records : inputs)) {
        out << p.string() << "\n";
      }
      return 0;
    }
    if (subcommand == "stats") {
      const auto s = stats_for_records(cfg, inputs.empty() ? cfg.evaluation.records : inputs);
      out << "sessions " << s.sessions << "\nturns_total " << s.turns_total << "\ntokens_per_conv_avg "
          << s.tokens_per_conv_avg << "\nevents_total " << s.events_total << "\nevent_token_usage_avg "
          << s.event_token_usage_avg << "\n";
      return 0;
    }
    // serve
    InterviewService service(make_service_context(cfg));
    const auto resumed = service.resume_from_disk();
    HttpApi api(service);
    const int port = api.bind(cfg.service.host, cfg.service.port);
    if (port < 0) throw Error(ErrorCode::IoError, "cannot bind " + cfg.service.host);
    out << "listening on " << cfg.service.host << ":" << port << " (" << resumed << " interviews resumed)\n"
        << std::flush;
    api.listen();
    return 0;
  } catch (const Error& e) {
    err << "error [" << to_string(e.code()) << "]: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

int run_cli(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
  if (argv.size() < 2 || argv[1] == "-h" || argv[1] == "--help") {
    (argv.size() < 2 ? err : out) << usage_text();
    return argv.size() < 2 ? 2 : 0;
  }
  const std::string sub = argv[1];
  const bool known =
      std::any_of(std::begin(kSubcommands), std::end(kSubcommands), [&](const char* s) { return sub == s; });
  if (!known) {
    err << "unknown subcommand: " << sub << "\n" << usage_text();
    return 2;
  }

  CLI::App app{"memoir " + sub, "memoir"};
  ShellArgs args;
  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  int parallel = 1;
  int port = 0;
  std::string mode;
  app.add_option("--config", config_path, "config file")->required();
  auto* out_opt = app.add_option("--out", out_dir, "output directory");
  auto* seed_opt = app.add_option("--seed", seed, "run seed");
  auto* par_opt = app.add_option("--parallel", parallel, "concurrent interviews")->check(CLI::PositiveNumber);
  auto* mode_opt = app.add_option("--mode", mode, "guided or baseline")->check(CLI::IsMember({"guided", "baseline"}));
  auto* port_opt = app.add_option("--port", port, "serve: listen port")->check(CLI::Range(0, 65535));
  app.add_option("inputs", args.inputs, "record files");

  std::vector<std::string> rest(argv.begin() + 2, argv.end());
  std::reverse(rest.begin(), rest.end());
  try {
    app.parse(rest);
  } catch (const CLI::CallForHelp&) {
    out << app.help() << "\n" << usage_text();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n" << usage_text();
    return 2;
  }
  if (*out_opt) args.out = fs::path(out_dir);
  if (*seed_opt) args.seed = seed;
  if (*par_opt) args.parallel = parallel;
  if (*mode_opt) args.mode = engine_mode_from_string(mode);
  if (*port_opt) args.port = port;
  args.config = config_path;

  RunConfig cfg;
  try {
    cfg = load_config(*args.config);
    apply_overrides(cfg, args);
  } catch (const Error& e) {
    err << "error [" << to_string(e.code()) << "]: " << e.what() << "\n";
    return 1;
  }
  return dispatch(sub, cfg, args, out, err);
}

}  // namespace memoir
