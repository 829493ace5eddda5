#include "memoir/memory_graph.hpp"

#include <algorithm>
#include <cstdio>
#include <regex>

#include "memoir/dates.hpp"
#include "memoir/error.hpp"
#include "memoir/text.hpp"

namespace memoir {

namespace {

constexpr const char* kExtractTemplate =
    "You are given a conversation between a counselor and a user:\n"
    "====== Conversation Begin ======\n"
    "{conversation}\n"
    "====== Conversation End ======\n"
    "Read the conversation carefully and list all the events/moments/stories/experiences alone or with others "
    "mentioned by the patient in detail and the date these events happened. Please list as many as possible. "
    "Your output should be in the following format:\n"
    "1. <date>#<topic>#<people-involved>#<description in detail>\n"
    "2. <date>#<topic>#<people-involved>#<description in detail>\n"
    "...\n"
    "e.g.,\n"
    "1. 1980 early#Birthday Party#Michelle, Adolf, neighbors#<descriptions of this party in detail>\n"
    "These events should be ranked in chronological order.";

constexpr const char* kExploreTemplate =
    "You are given a list of memory nodes from a user's life, which include events and details about those "
    "events. Your task is to reactivate the user's memory by generating some questions to ask the user, Your "
    "generated questions should potentially fulfill the memory nodes. Each memory node contains a Date, Topic, "
    "Involved People, and a Description of the event. Here are the memory nodes:\n"
    "====== Memory Node Begin ======\n"
    "{memory_node_info}\n"
    "====== Memory Node End ======\n"
    "Here are some examples of how you can frame your questions:\n"
    "If you notice there are no events recorded during a certain period, like youth or old age, you could ask: "
    "\"I see there's not much about your youth/old age. What happened during that time?\"\n"
    "If a certain person appears multiple times, you might ask: \"I noticed that <name> comes up often. Why is "
    "<name> important to you?\"\n"
    "If someone appears in a significant event, you could ask: \"<name> seems to play a key role in this event. "
    "Is there more to the story with <name>?\"\n"
    "Similarly, you should discover other situations and frame questions from the existing memory nodes. "
    "Remember your task is to make the user talk more about their memory and fulfill the memory nodes. Thus, you "
    "should explore all the possible and reasonable questions.\n"
    "Your output should be in the following format:\n"
    "1. Question: <generated question>\n"
    "2. Question: <generated question>\n"
    "...\n"
    "e.g.,\n"
    "1. Question: I noticed you didn't talk much about your youth, what happened during this period?";

const std::regex& ordinal_prefix() {
  static const std::regex re(R"(^\s*\d+\.\s*)");
  return re;
}

bool is_people_placeholder(const std::string& field) {
  const std::string k = text::to_lower(text::trim(field));
  return k.empty() || k == "-" || k == "\xE2\x80\x94" || k == "none" || k == "n/a";
}

std::vector<std::string> canonical_people(const std::vector<std::string>& people) {
  std::map<std::string, std::string> by_key;
  for (const auto& p : people) {
    const std::string name = text::trim(p);
    if (name.empty()) continue;
    auto [it, inserted] = by_key.emplace(person_key(name), name);
    if (!inserted && name < it->second) it->second = name;
  }
  std::vector<std::string> out;
  out.reserve(by_key.size());
  for (auto& [key, name] : by_key) out.push_back(std::move(name));
  return out;
}

std::set<std::string> topic_keys(const MemoryNode& n) {
  std::set<std::string> out;
  for (const auto& t : n.topics) {
    std::string k = text::normalize(t);
    if (!k.empty()) out.insert(std::move(k));
  }
  return out;
}

template <typename Set>
bool intersects(const Set& a, const Set& b) {
  auto i = a.begin();
  auto j = b.begin();
  while (i != a.end() && j != b.end()) {
    if (*i < *j) {
      ++i;
    } else if (*j < *i) {
      ++j;
    } else {
      return true;
    }
  }
  return false;
}

std::set<std::string> people_keys(const MemoryNode& n) {
  std::set<std::string> out;
  for (const auto& p : n.event.people) out.insert(person_key(p));
  return out;
}

}  // namespace

std::string_view to_string(EventSource source) {
  return source == EventSource::Interview ? "interview" : "ground_truth";
}

std::string person_key(std::string_view name) { return text::to_lower(text::trim(name)); }

std::string format_event_line(const Event& event) {
  const std::string people = event.people.empty() ? std::string("\xE2\x80\x94") : text::join(event.people, ", ");
  return event.date_raw + "#" + event.topic + "#" + people + "#" + event.description;
}

Event parse_event_line(std::string_view line) {
  std::string body = std::regex_replace(std::string(line), ordinal_prefix(), "",
                                        std::regex_constants::format_first_only);
  std::vector<std::string> fields;
  std::size_t start = 0;
  for (int i = 0; i < 3; ++i) {
    const std::size_t hash = body.find('#', start);
    if (hash == std::string::npos) break;
    fields.push_back(body.substr(start, hash - start));
    start = hash + 1;
  }
  if (fields.size() < 3) {
    throw Error(ErrorCode::MalformedLine, "expected 4 '#'-separated fields: " + std::string(line));
  }
  fields.push_back(body.substr(start));

  Event e;
  e.date_raw = text::trim(fields[0]);
  e.date_key = date_key_of(e.date_raw);
  e.topic = text::trim(fields[1]);
  if (!is_people_placeholder(fields[2])) {
    for (const auto& p : text::split(fields[2], ',')) {
      std::string name = text::trim(p);
      if (!name.empty()) e.people.push_back(std::move(name));
    }
  }
  e.description = text::trim(fields[3]);
  if (e.description.empty()) {
    throw Error(ErrorCode::MalformedLine, "empty description: " + std::string(line));
  }
  return e;
}

const MemoryNode* MemoryGraph::find(const std::string& id) const {
  auto it = nodes_.find(id);
  return it == nodes_.end() ? nullptr : &it->second;
}

std::string MemoryGraph::allocate_id() {
  char buf[32];
  std::snprintf(buf, sizeof buf, "ev-%06llu", static_cast<unsigned long long>(next_id_++));
  return buf;
}

MemoryNode MemoryGraph::node_from_event(const Event& e, std::string id) {
  MemoryNode n;
  n.event = e;
  n.event.id = std::move(id);
  n.event.people = canonical_people(e.people);
  n.topics.insert(e.topic);
  if (e.session_id) n.session_ids.insert(*e.session_id);
  return n;
}

bool MemoryGraph::should_merge(const MemoryNode& a, const MemoryNode& b) {
  if (a.event.date_key != b.event.date_key) return false;
  const bool shared_person = intersects(people_keys(a), people_keys(b));
  const bool shared_topic = intersects(topic_keys(a), topic_keys(b));
  if (!a.event.undated()) return shared_person || shared_topic;
  const bool both_anonymous = a.event.people.empty() && b.event.people.empty();
  return shared_topic && (shared_person || both_anonymous);
}

void MemoryGraph::absorb(MemoryNode& into, const MemoryNode& from) {
  std::vector<std::string> people = into.event.people;
  people.insert(people.end(), from.event.people.begin(), from.event.people.end());
  into.event.people = canonical_people(people);

  into.topics.insert(from.topics.begin(), from.topics.end());
  into.event.topic = *into.topics.begin();

  if (into.event.description.find(from.event.description) == std::string::npos) {
    into.event.description += " / " + from.event.description;
  }
  into.session_ids.insert(from.session_ids.begin(), from.session_ids.end());
  if (!into.session_ids.empty()) into.event.session_id = *into.session_ids.begin();
}

MergeReport MemoryGraph::upsert_and_merge(const std::vector<Event>& events) {
  MergeReport report;
  std::set<std::string> fresh;
  for (const auto& e : events) {
    MemoryNode candidate = node_from_event(e, {});
    auto target = std::find_if(nodes_.begin(), nodes_.end(),
                               [&](const auto& kv) { return should_merge(kv.second, candidate); });
    if (target != nodes_.end()) {
      absorb(target->second, candidate);
      ++report.merged;
    } else {
      std::string id = allocate_id();
      candidate.event.id = id;
      fresh.insert(id);
      nodes_.emplace(std::move(id), std::move(candidate));
    }
  }

  bool changed = true;
  while (changed) {
    changed = false;
    for (auto a = nodes_.begin(); a != nodes_.end(); ++a) {
      for (auto b = std::next(a); b != nodes_.end();) {
        if (should_merge(a->second, b->second)) {
          absorb(a->second, b->second);
          fresh.erase(b->first);
          b = nodes_.erase(b);
          ++report.merged;
          changed = true;
        } else {
          ++b;
        }
      }
    }
  }
  report.inserted = static_cast<int>(fresh.size());
  rebuild_indexes();
  return report;
}

void MemoryGraph::rebuild_indexes() {
  person_index_.clear();
  date_index_.clear();
  for (const auto& [id, node] : nodes_) {
    for (const auto& p : node.event.people) person_index_[person_key(p)].insert(id);
    date_index_[node.event.undated() ? std::string(kUndatedKey) : node.event.date_key].insert(id);
  }
}

std::size_t MemoryGraph::unasked_count() const {
  return static_cast<std::size_t>(
      std::count_if(cache_.begin(), cache_.end(), [](const auto& q) { return !q.asked; }));
}

std::size_t MemoryGraph::enqueue_questions(const std::vector<ExtrapolatedQuestion>& questions) {
  std::set<std::string> seen;
  for (const auto& q : cache_) seen.insert(text::normalize(q.text));
  std::size_t added = 0;
  for (const auto& q : questions) {
    if (text::trim(q.text).empty()) continue;
    if (!seen.insert(text::normalize(q.text)).second) continue;
    cache_.push_back(q);
    cache_.back().asked = false;
    ++added;
  }
  return added;
}

std::optional<ExtrapolatedQuestion> MemoryGraph::pop_question() {
  for (auto& q : cache_) {
    if (!q.asked) {
      q.asked = true;
      return q;
    }
  }
  return std::nullopt;
}

std::vector<const MemoryNode*> MemoryGraph::nodes_for_session(const std::string& session_id) const {
  std::vector<const MemoryNode*> out;
  for (const auto& [id, node] : nodes_) {
    if (node.session_ids.contains(session_id)) out.push_back(&node);
  }
  return out;
}

nlohmann::json MemoryGraph::to_json() const {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& [id, n] : nodes_) {
    nlohmann::json j{{"id", id},
                     {"date_raw", n.event.date_raw},
                     {"date_key", n.event.date_key},
                     {"topic", n.event.topic},
                     {"topics", n.topics},
                     {"people", n.event.people},
                     {"description", n.event.description},
                     {"source", to_string(n.event.source)},
                     {"session_ids", n.session_ids}};
    j["session_id"] = n.event.session_id ? nlohmann::json(*n.event.session_id) : nlohmann::json(nullptr);
    nodes.push_back(std::move(j));
  }
  nlohmann::json cache = nlohmann::json::array();
  for (const auto& q : cache_) {
    cache.push_back({{"text", q.text}, {"rationale", q.rationale}, {"origin_event_ids", q.origin_event_ids},
                     {"asked", q.asked}});
  }
  return {{"schema_version", kSchemaVersion}, {"next_id", next_id_}, {"nodes", std::move(nodes)},
          {"question_cache", std::move(cache)}};
}

MemoryGraph MemoryGraph::from_json(const nlohmann::json& doc) {
  MemoryGraph g;
  try {
    const int version = doc.value("schema_version", 0);
    if (version != kSchemaVersion) {
      throw Error(ErrorCode::ParseError, "unsupported memory graph schema_version " + std::to_string(version));
    }
    g.next_id_ = doc.at("next_id").get<std::uint64_t>();
    for (const auto& j : doc.at("nodes")) {
      MemoryNode n;
      n.event.id = j.at("id").get<std::string>();
      n.event.date_raw = j.at("date_raw").get<std::string>();
      n.event.date_key = j.at("date_key").get<std::string>();
      n.event.topic = j.at("topic").get<std::string>();
      n.topics = j.at("topics").get<std::set<std::string>>();
      n.event.people = j.at("people").get<std::vector<std::string>>();
      n.event.description = j.at("description").get<std::string>();
      n.event.source =
          j.at("source").get<std::string>() == "ground_truth" ? EventSource::GroundTruth : EventSource::Interview;
      n.session_ids = j.at("session_ids").get<std::set<std::string>>();
      if (!j.at("session_id").is_null()) n.event.session_id = j.at("session_id").get<std::string>();
      g.nodes_.emplace(n.event.id, std::move(n));
    }
    for (const auto& j : doc.at("question_cache")) {
      g.cache_.push_back({j.at("text").get<std::string>(), j.value("rationale", std::string{}),
                          j.value("origin_event_ids", std::vector<std::string>{}), j.value("asked", false)});
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("memory graph: ") + e.what());
  }
  g.rebuild_indexes();
  return g;
}

std::string extract_events_prompt(const Transcript& window) {
  std::string prompt = kExtractTemplate;
  text::replace_all(prompt, "{conversation}", format_transcript(window));
  return prompt;
}

ExtractionResult parse_extraction(std::string_view reply) {
  ExtractionResult result;
  for (const auto& raw : text::split_lines(reply)) {
    if (!std::regex_search(raw, ordinal_prefix())) continue;
    try {
      result.events.push_back(parse_event_line(raw));
    } catch (const Error&) {
      ++result.warnings;
    }
  }
  return result;
}

ExtractionResult extract_events(const Transcript& window, Gateway& gateway, const GenerationParams& params,
                                const std::string& topic_id, const std::optional<std::string>& session_id) {
  const bool has_user = std::any_of(window.begin(), window.end(), [](const auto& m) { return m.role == Role::User; });
  if (!has_user) throw Error(ErrorCode::InvalidRequest, "extraction window has no user message");
  const std::string reply =
      gateway.complete({{Role::User, extract_events_prompt(window), 0}}, params, CallSite::Extract, topic_id);
  ExtractionResult result = parse_extraction(reply);
  for (auto& e : result.events) {
    e.source = EventSource::Interview;
    e.session_id = session_id;
  }
  return result;
}

std::string memory_node_info(const MemoryGraph& graph) {
  std::vector<std::string> lines;
  int i = 1;
  for (const auto& [id, n] : graph.nodes()) {
    const std::string people = n.event.people.empty() ? "none" : text::join(n.event.people, ", ");
    lines.push_back(std::to_string(i++) + ". Date: " + (n.event.date_raw.empty() ? "unknown" : n.event.date_raw) +
                    "; Topic: " + n.event.topic + "; Involved People: " + people +
                    "; Description: " + n.event.description);
  }
  return text::join(lines, "\n");
}

std::string explore_prompt(const MemoryGraph& graph) {
  std::string prompt = kExploreTemplate;
  text::replace_all(prompt, "{memory_node_info}", memory_node_info(graph));
  return prompt;
}

std::vector<std::string> parse_question_lines(std::string_view reply) {
  static const std::regex re(R"(^\s*\d+\.\s*Question:\s*(.*\S)\s*$)", std::regex::icase);
  std::vector<std::string> out;
  for (const auto& line : text::split_lines(reply)) {
    std::smatch m;
    if (std::regex_match(line, m, re)) out.push_back(m[1].str());
  }
  return out;
}

ExtrapolationResult extrapolate_questions(MemoryGraph& graph, Gateway& gateway, const GenerationParams& params,
                                          const std::string& topic_id) {
  if (graph.size() == 0) throw Error(ErrorCode::InvalidRequest, "cannot extrapolate from an empty graph");
  const std::string reply =
      gateway.complete({{Role::User, explore_prompt(graph), 0}}, params, CallSite::Extrapolate, topic_id);

  ExtrapolationResult result;
  for (auto& q : parse_question_lines(reply)) {
    ExtrapolatedQuestion eq;
    eq.text = std::move(q);
    // Origin: nodes whose people or topic the question names; all nodes otherwise.
    for (const auto& [id, n] : graph.nodes()) {
      bool named = text::contains_ci(eq.text, n.event.topic) && !n.event.topic.empty();
      for (const auto& p : n.event.people) named = named || text::contains_ci(eq.text, p);
      if (named) eq.origin_event_ids.push_back(id);
    }
    if (eq.origin_event_ids.empty()) {
      for (const auto& [id, n] : graph.nodes()) eq.origin_event_ids.push_back(id);
    }
    result.questions.push_back(std::move(eq));
  }
  if (result.questions.empty() && !text::trim(reply).empty()) ++result.warnings;
  result.added = graph.enqueue_questions(result.questions);
  return result;
}

}  // namespace memoir
