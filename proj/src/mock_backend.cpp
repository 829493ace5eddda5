#include "memoir/mock_backend.hpp"

#include <cctype>

#include "memoir/error.hpp"
#include "memoir/text.hpp"

namespace memoir {

namespace {

MockRule::Match parse_match(const nlohmann::json& rule, std::string& pattern) {
  if (rule.contains("match")) {
    pattern = rule.at("match").get<std::string>();
    return MockRule::Match::Exact;
  }
  if (rule.contains("contains")) {
    pattern = rule.at("contains").get<std::string>();
    return MockRule::Match::Contains;
  }
  if (rule.contains("regex")) {
    pattern = rule.at("regex").get<std::string>();
    return MockRule::Match::Regex;
  }
  return MockRule::Match::Any;
}

std::vector<std::string> parse_replies(const nlohmann::json& node) {
  if (node.is_string()) return {node.get<std::string>()};
  return node.get<std::vector<std::string>>();
}

std::string expand(const std::string& tmpl, const std::smatch* captures, const CompletionRequest& request) {
  std::string out;
  out.reserve(tmpl.size());
  std::size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl.compare(i, 2, "{{") == 0) {
      const std::size_t close = tmpl.find("}}", i + 2);
      if (close != std::string::npos) {
        const std::string name = tmpl.substr(i + 2, close - i - 2);
        if (name.size() == 1 && std::isdigit(static_cast<unsigned char>(name[0]))) {
          const auto idx = static_cast<std::size_t>(name[0] - '0');
          if (captures && idx < captures->size()) out += (*captures)[idx].str();
        } else if (name == "topic") {
          out += request.topic_id;
        } else if (name == "tag") {
          out += to_string(request.tag);
        } else if (name == "digest") {
          out += text::digest(request.key_text()).substr(0, 8);
        } else if (name == "key") {
          out += request.key_text();
        } else {
          out += tmpl.substr(i, close + 2 - i);
        }
        i = close + 2;
        continue;
      }
    }
    out.push_back(tmpl[i++]);
  }
  return out;
}

const std::string& pick(const std::vector<std::string>& replies, const std::string& key, std::uint64_t seed) {
  if (replies.size() == 1) return replies.front();
  const std::uint64_t h = text::fnv1a64(key) ^ (seed * 0x9e3779b97f4a7c15ULL);
  return replies[static_cast<std::size_t>(h % replies.size())];
}

}  // namespace

MockScript MockScript::from_json(const nlohmann::json& doc) {
  MockScript script;
  try {
    script.dimension = doc.value("dimension", std::size_t{64});
    script.embedding_seed = doc.value("embedding_seed", std::uint64_t{17});
    script.seed = doc.value("seed", std::uint64_t{0});
    if (script.dimension == 0) throw Error(ErrorCode::ParseError, "mock dimension must be positive");

    const auto rules = doc.value("rules", nlohmann::json::array());
    for (const auto& r : rules) {
      MockRule rule;
      if (r.contains("tag") && r.at("tag").get<std::string>() != "*") {
        const auto name = r.at("tag").get<std::string>();
        rule.tag = call_site_from_string(name);
        if (!rule.tag) throw Error(ErrorCode::ParseError, "unknown mock tag: " + name);
      }
      if (r.contains("topic")) rule.topic = r.at("topic").get<std::string>();
      rule.match = parse_match(r, rule.pattern);
      if (rule.match == MockRule::Match::Regex) {
        rule.compiled = std::regex(rule.pattern, std::regex::ECMAScript);
      }
      if (r.contains("reply")) {
        rule.replies = parse_replies(r.at("reply"));
      } else if (r.contains("replies")) {
        rule.replies = parse_replies(r.at("replies"));
      }
      if (rule.replies.empty()) throw Error(ErrorCode::ParseError, "mock rule without replies");
      script.rules.push_back(std::move(rule));
    }

    // Shorthand used by small fixtures: {"script": {"hello": "hi"}}.
    const auto exact = doc.value("script", nlohmann::json::object());
    for (const auto& [key, value] : exact.items()) {
      MockRule rule;
      rule.match = MockRule::Match::Exact;
      rule.pattern = key;
      rule.replies = parse_replies(value);
      script.rules.push_back(std::move(rule));
    }

    const auto fallbacks = doc.value("fallbacks", nlohmann::json::object());
    for (const auto& [tag, value] : fallbacks.items()) {
      if (tag != "*" && !call_site_from_string(tag)) {
        throw Error(ErrorCode::ParseError, "unknown fallback tag: " + tag);
      }
      script.fallbacks.emplace_back(tag, parse_replies(value));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("mock script: ") + e.what());
  } catch (const std::regex_error& e) {
    throw Error(ErrorCode::ParseError, std::string("mock script regex: ") + e.what());
  }
  return script;
}

MockScript MockScript::load(const std::filesystem::path& path) {
  const std::string body = text::read_file(path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
  return from_json(doc);
}

MockBackend::MockBackend(MockScript script) : script_(std::move(script)) {}

std::string MockBackend::complete(const CompletionRequest& request) {
  const std::string& key = request.key_text();
  for (const auto& rule : script_.rules) {
    if (rule.tag && *rule.tag != request.tag) continue;
    if (rule.topic && *rule.topic != request.topic_id) continue;
    std::smatch captures;
    bool hit = false;
    switch (rule.match) {
      case MockRule::Match::Any: hit = true; break;
      case MockRule::Match::Exact: hit = key == rule.pattern; break;
      case MockRule::Match::Contains: hit = key.find(rule.pattern) != std::string::npos; break;
      case MockRule::Match::Regex: hit = std::regex_search(key, captures, *rule.compiled); break;
    }
    if (!hit) continue;
    const auto* caps = rule.match == MockRule::Match::Regex ? &captures : nullptr;
    return expand(pick(rule.replies, key, script_.seed), caps, request);
  }
  const std::string tag(to_string(request.tag));
  for (const auto& [name, replies] : script_.fallbacks) {
    if (name == tag) return expand(pick(replies, key, script_.seed), nullptr, request);
  }
  for (const auto& [name, replies] : script_.fallbacks) {
    if (name == "*") return expand(pick(replies, key, script_.seed), nullptr, request);
  }
  throw Error(ErrorCode::ScriptMiss, "no mock entry for tag '" + tag + "' topic '" + request.topic_id +
                                         "' key digest " + text::digest(key));
}

Eigen::VectorXd hashed_bag_of_words(std::string_view input, std::size_t dimension, std::uint64_t seed) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dimension));
  const auto spans = default_tokenizer().tokenize(input);
  for (const auto& span : spans) {
    const std::string token = text::to_lower(input.substr(span.begin, span.end - span.begin));
    const std::uint64_t h = text::fnv1a64(token, 0xcbf29ce484222325ULL ^ seed);
    const auto slot = static_cast<Eigen::Index>(h % dimension);
    v[slot] += ((h >> 63) & 1U) ? -1.0 : 1.0;
  }
  const double norm = v.norm();
  if (norm > 0.0) {
    v /= norm;
  } else {
    // Punctuation-free but token-less input still needs a stable direction.
    v[static_cast<Eigen::Index>(text::fnv1a64(input, seed) % dimension)] = 1.0;
  }
  return v;
}

EmbeddingVector MockBackend::embed(std::string_view input) {
  if (input.empty()) throw Error(ErrorCode::EmptyText, "cannot embed empty text");
  return EmbeddingVector{hashed_bag_of_words(input, script_.dimension, script_.embedding_seed)};
}

}  // namespace memoir
