#include "memoir/app_config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>

#include "memoir/error.hpp"
#include "memoir/mock_backend.hpp"
#include "memoir/protocol.hpp"

namespace memoir {

namespace fs = std::filesystem;

namespace {

[[noreturn]] void invalid(const std::string& field, const std::string& why) {
  throw Error(ErrorCode::ValidationError, field + ": " + why);
}

// Typed access to one JSON object; remembers the keys it handed out so
// leftovers can be reported as unknown fields.
class Block {
 public:
  Block(const nlohmann::json& doc, std::string path) : doc_(doc), path_(std::move(path)) {
    if (!doc_.is_object()) invalid(path_.empty() ? "<root>" : path_, "expected an object");
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const nlohmann::json* raw(const std::string& key) {
    used_.insert(key);
    auto it = doc_.find(key);
    if (it == doc_.end() || it->is_null()) return nullptr;
    return &*it;
  }

  std::optional<std::int64_t> integer(const std::string& key) {
    const auto* v = raw(key);
    if (!v) return std::nullopt;
    if (!v->is_number_integer()) invalid(field(key), "expected an integer");
    return v->get<std::int64_t>();
  }

  std::optional<double> number(const std::string& key) {
    const auto* v = raw(key);
    if (!v) return std::nullopt;
    if (!v->is_number()) invalid(field(key), "expected a number");
    return v->get<double>();
  }

  std::optional<bool> boolean(const std::string& key) {
    const auto* v = raw(key);
    if (!v) return std::nullopt;
    if (!v->is_boolean()) invalid(field(key), "expected true or false");
    return v->get<bool>();
  }

  std::optional<std::string> string(const std::string& key) {
    const auto* v = raw(key);
    if (!v) return std::nullopt;
    if (!v->is_string()) invalid(field(key), "expected a string");
    return interpolate_env(v->get<std::string>(), field(key));
  }

  std::optional<Block> object(const std::string& key) {
    const auto* v = raw(key);
    if (!v) return std::nullopt;
    return Block(*v, field(key));
  }

  void finish() const {
    for (const auto& [k, _] : doc_.items()) {
      if (!used_.count(k)) invalid(field(k), "unknown field");
    }
  }

 private:
  const nlohmann::json& doc_;
  std::string path_;
  std::set<std::string> used_;
};

template <typename T>
T non_negative(std::int64_t v, const std::string& field) {
  if (v < 0) invalid(field, "must be >= 0");
  return static_cast<T>(v);
}

fs::path existing_path(const std::string& raw, const fs::path& base, const std::string& field) {
  fs::path p(raw);
  if (p.is_relative()) p = base / p;
  p = p.lexically_normal();
  if (!fs::exists(p)) invalid(field, "path does not exist: " + p.string());
  return p;
}

fs::path output_path(const std::string& raw, const fs::path& base) {
  fs::path p(raw);
  if (p.is_relative()) p = base / p;
  return p.lexically_normal();
}

BackendSpec parse_backend(Block b, const fs::path& base) {
  BackendSpec spec;
  if (auto k = b.string("kind")) spec.kind = *k;
  if (spec.kind != "mock" && spec.kind != "remote") invalid(b.field("kind"), "expected mock or remote");
  if (auto s = b.string("mock_script")) spec.mock_script = existing_path(*s, base, b.field("mock_script"));
  if (auto v = b.integer("max_in_flight")) {
    spec.options.max_in_flight = non_negative<std::size_t>(*v, b.field("max_in_flight"));
    if (spec.options.max_in_flight == 0) invalid(b.field("max_in_flight"), "must be at least 1");
  }
  if (auto v = b.integer("call_budget")) spec.options.call_budget = non_negative<std::size_t>(*v, b.field("call_budget"));
  if (auto r = b.object("remote")) {
    auto& rc = spec.remote;
    if (auto v = r->string("endpoint")) rc.endpoint = *v;
    if (auto v = r->string("model")) rc.model = *v;
    if (auto v = r->string("embedding_model")) rc.embedding_model = *v;
    if (auto v = r->string("api_key")) rc.api_key = *v;
    if (auto v = r->integer("dimension")) rc.dimension = non_negative<std::size_t>(*v, r->field("dimension"));
    if (auto v = r->integer("max_retries")) rc.max_retries = non_negative<int>(*v, r->field("max_retries"));
    if (auto v = r->integer("initial_backoff_ms")) {
      rc.initial_backoff = std::chrono::milliseconds(non_negative<int>(*v, r->field("initial_backoff_ms")));
    }
    if (auto v = r->integer("timeout_s")) rc.timeout = std::chrono::seconds(non_negative<int>(*v, r->field("timeout_s")));
    r->finish();
  }
  b.finish();
  if (spec.kind == "mock" && spec.mock_script.empty()) invalid(b.field("mock_script"), "required for the mock backend");
  if (spec.kind == "remote" && spec.remote.endpoint.empty()) {
    invalid(b.field("remote.endpoint"), "required for the remote backend");
  }
  return spec;
}

nlohmann::json backend_json(const BackendSpec& s) {
  nlohmann::json j = {{"kind", s.kind}, {"max_in_flight", s.options.max_in_flight}};
  j["call_budget"] = s.options.call_budget ? nlohmann::json(*s.options.call_budget) : nlohmann::json(nullptr);
  if (s.kind == "mock") j["mock_script"] = s.mock_script.filename().string();
  if (s.kind == "remote") {
    j["remote"] = {{"endpoint", s.remote.endpoint},
                   {"model", s.remote.model},
                   {"embedding_model", s.remote.embedding_model},
                   {"max_retries", s.remote.max_retries}};
  }
  return j;
}

}  // namespace

std::string interpolate_env(const std::string& value, const std::string& field) {
  std::string out;
  std::size_t i = 0;
  while (i < value.size()) {
    const auto open = value.find("${", i);
    if (open == std::string::npos) break;
    const auto close = value.find('}', open + 2);
    if (close == std::string::npos) invalid(field, "unterminated ${ in value");
    out.append(value, i, open - i);
    const std::string name = value.substr(open + 2, close - open - 2);
    const char* env = std::getenv(name.c_str());
    if (!env) invalid(field, "environment variable " + name + " is not set");
    out += env;
    i = close + 1;
  }
  out.append(value, i, std::string::npos);
  return out;
}

EngineConfig parse_engine_config(const nlohmann::json& doc, const std::string& prefix) {
  EngineConfig cfg;
  Block b(doc, prefix);
  auto as_int = [&](const std::string& key, std::int64_t v) {
    if (v < INT32_MIN || v > INT32_MAX) invalid(b.field(key), "out of range");
    return static_cast<int>(v);
  };
  if (auto v = b.integer("round_limit")) cfg.round_limit = as_int("round_limit", *v);
  if (auto v = b.integer("rounds")) cfg.round_limit = as_int("round_limit", *v);
  if (auto v = b.integer("session_limit")) cfg.session_limit = as_int("session_limit", *v);
  if (auto v = b.string("mode")) {
    auto m = engine_mode_from_string(*v);
    if (!m) invalid(b.field("mode"), "expected guided or baseline");
    cfg.mode = *m;
  }
  if (auto v = b.integer("extrapolation_period")) cfg.extrapolation_period = as_int("extrapolation_period", *v);
  if (auto v = b.boolean("memory_enabled")) cfg.memory_enabled = *v;
  if (auto v = b.boolean("empathy_enabled")) cfg.empathy_enabled = *v;
  if (const auto* s = b.raw("strategies")) {
    if (!s->is_array()) invalid(b.field("strategies"), "expected an array of names");
    cfg.strategy.strategies.clear();
    for (const auto& name : *s) {
      auto st = name.is_string() ? strategy_from_string(name.get<std::string>()) : std::nullopt;
      if (!st) invalid(b.field("strategies"), "unknown strategy " + name.dump());
      cfg.strategy.strategies.insert(*st);
    }
  }
  if (auto v = b.number("comfort_threshold")) cfg.strategy.comfort_threshold = *v;
  if (auto v = b.boolean("acknowledge_non_negative")) cfg.strategy.acknowledge_non_negative = *v;
  if (auto v = b.integer("max_new_tokens")) cfg.params.max_new_tokens = as_int("max_new_tokens", *v);
  if (auto v = b.number("temperature")) cfg.params.temperature = *v;
  if (auto v = b.integer("aux_max_new_tokens")) cfg.aux_params.max_new_tokens = as_int("aux_max_new_tokens", *v);
  if (auto v = b.integer("extraction_window")) {
    cfg.extraction_window = non_negative<std::size_t>(*v, b.field("extraction_window"));
  }
  if (auto v = b.integer("summary_token_cap")) {
    cfg.summary_token_cap = non_negative<std::size_t>(*v, b.field("summary_token_cap"));
  }
  if (auto v = b.integer("session_time_budget_ms")) cfg.session_time_budget = std::chrono::milliseconds(*v);
  b.finish();
  try {
    cfg.validate(0);
  } catch (const Error& e) {
    // validate() names fields relative to "engine"; re-anchor on the prefix.
    std::string msg = e.what();
    if (msg.rfind("engine.", 0) == 0) msg = prefix + msg.substr(6);
    throw Error(ErrorCode::ValidationError, msg);
  }
  return cfg;
}

nlohmann::json engine_config_json(const EngineConfig& cfg) {
  nlohmann::json strategies = nlohmann::json::array();
  for (auto s : cfg.strategy.strategies) strategies.push_back(std::string(to_string(s)));
  nlohmann::json j = {{"round_limit", cfg.round_limit},
                      {"session_limit", cfg.session_limit},
                      {"mode", std::string(to_string(cfg.mode))},
                      {"extrapolation_period", cfg.extrapolation_period},
                      {"memory_enabled", cfg.memory_enabled},
                      {"empathy_enabled", cfg.empathy_enabled},
                      {"strategies", strategies},
                      {"comfort_threshold", cfg.strategy.comfort_threshold},
                      {"acknowledge_non_negative", cfg.strategy.acknowledge_non_negative},
                      {"max_new_tokens", cfg.params.max_new_tokens},
                      {"aux_max_new_tokens", cfg.aux_params.max_new_tokens},
                      {"extraction_window", cfg.extraction_window},
                      {"summary_token_cap", cfg.summary_token_cap}};
  if (cfg.params.temperature) j["temperature"] = *cfg.params.temperature;
  if (cfg.session_time_budget) j["session_time_budget_ms"] = cfg.session_time_budget->count();
  return j;
}

RunConfig parse_config(const nlohmann::json& doc, const fs::path& base_dir) {
  RunConfig cfg;
  Block root(doc, "");

  if (auto v = root.integer("seed")) cfg.seed = non_negative<std::uint64_t>(*v, "seed");
  if (auto v = root.integer("parallel")) {
    cfg.parallel = non_negative<int>(*v, "parallel");
    if (cfg.parallel < 1) invalid("parallel", "must be at least 1");
  }
  if (auto v = root.string("output_dir")) cfg.output_dir = output_path(*v, base_dir);
  else cfg.output_dir = output_path("out", base_dir);
  if (auto v = root.boolean("generate_book")) cfg.generate_book = *v;

  if (auto v = root.string("protocol")) cfg.protocol_path = existing_path(*v, base_dir, "protocol");
  else cfg.protocol_path = default_protocol_path();

  // Shorthand: a bare mock script at the top level.
  std::optional<std::string> shorthand = root.string("mock_script");
  if (auto g = root.object("gateway")) {
    cfg.gateway = parse_backend(*g, base_dir);
  } else if (shorthand) {
    cfg.gateway.mock_script = existing_path(*shorthand, base_dir, "mock_script");
  } else {
    invalid("gateway", "a gateway block or mock_script is required");
  }
  if (auto g = root.object("judge_gateway")) cfg.judge_gateway = parse_backend(*g, base_dir);
  if (auto g = root.object("proxy_gateway")) cfg.proxy_gateway = parse_backend(*g, base_dir);

  if (auto d = root.object("detector")) {
    if (auto k = d->string("kind")) cfg.detector.kind = *k;
    if (cfg.detector.kind != "gateway" && cfg.detector.kind != "scripted" && cfg.detector.kind != "none") {
      invalid("detector.kind", "expected gateway, scripted or none");
    }
    if (auto s = d->string("script")) cfg.detector.script = existing_path(*s, base_dir, "detector.script");
    d->finish();
    if (cfg.detector.kind == "scripted" && cfg.detector.script.empty()) {
      invalid("detector.script", "required for the scripted detector");
    }
  }

  if (const auto* e = root.raw("engine")) cfg.engine = parse_engine_config(*e, "engine");

  if (const auto* ps = root.raw("personas")) {
    if (!ps->is_array()) invalid("personas", "expected an array");
    std::set<std::string> ids;
    for (std::size_t i = 0; i < ps->size(); ++i) {
      const std::string where = "personas[" + std::to_string(i) + "]";
      Block p((*ps)[i], where);
      PersonaSource src;
      auto id = p.string("id");
      auto path = p.string("path");
      if (!id || id->empty()) invalid(where + ".id", "required");
      if (!path) invalid(where + ".path", "required");
      if (!ids.insert(*id).second) invalid(where + ".id", "duplicate persona id " + *id);
      src.id = *id;
      src.path = existing_path(*path, base_dir, where + ".path");
      p.finish();
      cfg.personas.push_back(std::move(src));
    }
  }

  if (auto p = root.object("persona")) {
    auto& o = cfg.persona;
    if (auto v = p->integer("chunk_size")) o.chunking.size = non_negative<std::size_t>(*v, "persona.chunk_size");
    if (auto v = p->integer("chunk_overlap")) {
      o.chunking.overlap = non_negative<std::size_t>(*v, "persona.chunk_overlap");
    }
    if (auto v = p->number("similarity_threshold")) o.similarity_threshold = *v;
    if (auto v = p->integer("max_retrieve_loops")) {
      o.max_retrieve_loops = non_negative<int>(*v, "persona.max_retrieve_loops");
    }
    if (auto v = p->integer("top_k")) o.top_k = non_negative<std::size_t>(*v, "persona.top_k");
    if (auto v = p->integer("summary_source_tokens")) {
      o.summary_source_tokens = non_negative<std::size_t>(*v, "persona.summary_source_tokens");
    }
    if (auto v = p->integer("max_sentences")) o.max_sentences = non_negative<std::size_t>(*v, "persona.max_sentences");
    if (auto v = p->integer("max_new_tokens")) o.params.max_new_tokens = non_negative<int>(*v, "persona.max_new_tokens");
    p->finish();
    if (o.chunking.size == 0) invalid("persona.chunk_size", "must be at least 1");
    if (o.chunking.overlap >= o.chunking.size) invalid("persona.chunk_overlap", "must be smaller than chunk_size");
    if (o.similarity_threshold < -1.0 || o.similarity_threshold > 1.0) {
      invalid("persona.similarity_threshold", "must lie in [-1, 1]");
    }
    if (o.max_sentences == 0) invalid("persona.max_sentences", "must be at least 1");
  }

  if (auto e = root.object("evaluation")) {
    auto& o = cfg.evaluation;
    auto paths = [&](const std::string& key, std::vector<fs::path>& into) {
      const auto* arr = e->raw(key);
      if (!arr) return;
      if (!arr->is_array()) invalid("evaluation." + key, "expected an array of paths");
      for (std::size_t i = 0; i < arr->size(); ++i) {
        const std::string where = "evaluation." + key + "[" + std::to_string(i) + "]";
        if (!(*arr)[i].is_string()) invalid(where, "expected a string");
        into.push_back(existing_path(interpolate_env((*arr)[i].get<std::string>(), where), base_dir, where));
      }
    };
    paths("records", o.records);
    paths("opponents", o.opponents);
    paths("empathy_off", o.empathy_off);
    if (auto v = e->string("metrics_fixture")) {
      o.metrics_fixture = existing_path(*v, base_dir, "evaluation.metrics_fixture");
    }
    if (auto v = e->string("round_annotations")) {
      o.round_annotations = existing_path(*v, base_dir, "evaluation.round_annotations");
    }
    if (const auto* dims = e->raw("dimensions")) {
      if (!dims->is_array()) invalid("evaluation.dimensions", "expected an array of names");
      o.dimensions.clear();
      for (const auto& d : *dims) {
        auto dim = d.is_string() ? judge_dimension_from_string(d.get<std::string>()) : std::nullopt;
        if (!dim) invalid("evaluation.dimensions", "unknown dimension " + d.dump());
        o.dimensions.push_back(*dim);
      }
    }
    if (auto v = e->boolean("correctness")) o.correctness = *v;
    e->finish();
  }

  if (auto s = root.object("service")) {
    auto& o = cfg.service;
    if (auto v = s->string("host")) o.host = *v;
    if (auto v = s->integer("port")) {
      if (*v < 0 || *v > 65535) invalid("service.port", "must lie in [0, 65535]");
      o.port = static_cast<int>(*v);
    }
    if (auto v = s->integer("max_interviews")) {
      o.max_interviews = non_negative<std::size_t>(*v, "service.max_interviews");
      if (o.max_interviews == 0) invalid("service.max_interviews", "must be at least 1");
    }
    if (auto v = s->string("state_dir")) o.state_dir = output_path(*v, base_dir);
    if (auto v = s->string("token")) o.token = *v;
    if (auto v = s->integer("long_poll_ms")) o.long_poll_ms = non_negative<int>(*v, "service.long_poll_ms");
    s->finish();
  }

  root.finish();

  const auto protocol = load_protocol(cfg.protocol_path);
  if (static_cast<std::size_t>(cfg.engine.session_limit) > protocol.topic_count()) {
    invalid("engine.session_limit", "exceeds the protocol's " + std::to_string(protocol.topic_count()) + " topics");
  }
  return cfg;
}

RunConfig load_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::ParseError, "cannot read config " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
  const fs::path base = fs::absolute(path).parent_path();
  RunConfig cfg = parse_config(doc, base);
  cfg.source = fs::absolute(path).lexically_normal();
  return cfg;
}

nlohmann::json config_snapshot(const RunConfig& cfg) {
  nlohmann::json personas = nlohmann::json::array();
  for (const auto& p : cfg.personas) personas.push_back({{"id", p.id}, {"source", p.path.filename().string()}});
  nlohmann::json j = {
      {"seed", cfg.seed},
      {"gateway", backend_json(cfg.gateway)},
      {"detector", cfg.detector.kind},
      {"engine", engine_config_json(cfg.engine)},
      {"protocol", cfg.protocol_path.filename().string()},
      {"personas", personas},
      {"persona",
       {{"chunk_size", cfg.persona.chunking.size},
        {"chunk_overlap", cfg.persona.chunking.overlap},
        {"similarity_threshold", cfg.persona.similarity_threshold},
        {"max_retrieve_loops", cfg.persona.max_retrieve_loops},
        {"top_k", cfg.persona.top_k},
        {"max_sentences", cfg.persona.max_sentences}}},
  };
  if (cfg.judge_gateway) j["judge_gateway"] = backend_json(*cfg.judge_gateway);
  if (cfg.proxy_gateway) j["proxy_gateway"] = backend_json(*cfg.proxy_gateway);
  return j;
}

std::shared_ptr<Backend> make_backend(const BackendSpec& spec, std::uint64_t seed) {
  if (spec.kind == "remote") return std::make_shared<RemoteBackend>(spec.remote);
  auto script = MockScript::load(spec.mock_script);
  script.seed = seed;
  return std::make_shared<MockBackend>(std::move(script));
}

std::shared_ptr<Gateway> make_gateway(const BackendSpec& spec, std::uint64_t seed) {
  return std::make_shared<Gateway>(make_backend(spec, seed), spec.options);
}

std::shared_ptr<EmotionDetector> make_detector(const DetectorSpec& spec, std::shared_ptr<Gateway> gateway) {
  if (spec.kind == "none") return nullptr;
  if (spec.kind == "scripted") {
    std::ifstream in(spec.script, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot read detector script " + spec.script.string());
    try {
      return std::make_shared<ScriptedDetector>(ScriptedDetector::from_json(nlohmann::json::parse(in)));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::ParseError, spec.script.string() + ": " + e.what());
    }
  }
  return std::make_shared<GatewayDetector>(std::move(gateway));
}

}  // namespace memoir
