#pragma once

#include <nlohmann/json.hpp>

#include <deque>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "memoir/llm_gateway.hpp"

namespace memoir {

enum class EventSource { Interview, GroundTruth };

std::string_view to_string(EventSource source);

struct Event {
  std::string id;
  std::string date_raw;
  std::string date_key;  // empty when undated
  std::string topic;
  std::vector<std::string> people;
  std::string description;
  EventSource source = EventSource::Interview;
  std::optional<std::string> session_id;

  bool undated() const { return date_key.empty(); }
  bool operator==(const Event&) const = default;
};

// A graph node: an event plus everything absorbed into it by merging.
struct MemoryNode {
  Event event;                       // topic = smallest constituent topic
  std::set<std::string> topics;      // every constituent topic as uttered
  std::set<std::string> session_ids; // every session that contributed

  bool operator==(const MemoryNode&) const = default;
};

struct ExtrapolatedQuestion {
  std::string text;
  std::string rationale;
  std::vector<std::string> origin_event_ids;
  bool asked = false;

  bool operator==(const ExtrapolatedQuestion&) const = default;
};

struct MergeReport {
  int inserted = 0;
  int merged = 0;
};

// "1. <date>#<topic>#<people>#<description>" without the ordinal.
std::string format_event_line(const Event& event);

// Strips the "N." ordinal and splits on '#' at most three times, so the
// description may itself contain '#'. Throws MalformedLine.
Event parse_event_line(std::string_view line);

// Canonical person key: trimmed, lowercase.
std::string person_key(std::string_view name);

class MemoryGraph {
 public:
  MemoryGraph() = default;

  const std::map<std::string, MemoryNode>& nodes() const { return nodes_; }
  std::size_t size() const { return nodes_.size(); }
  const MemoryNode* find(const std::string& id) const;

  const std::map<std::string, std::set<std::string>>& person_index() const { return person_index_; }
  const std::map<std::string, std::set<std::string>>& date_index() const { return date_index_; }

  // Merges each event into the lowest-id matching node or inserts it, then
  // merges nodes pairwise until no two satisfy the predicate.
  MergeReport upsert_and_merge(const std::vector<Event>& events);

  // Equal date key AND (shared person OR shared normalized topic).
  // Undated nodes need a shared topic AND (a shared person or no people on either side).
  static bool should_merge(const MemoryNode& a, const MemoryNode& b);

  const std::deque<ExtrapolatedQuestion>& question_cache() const { return cache_; }
  std::size_t unasked_count() const;

  // Appends questions whose normalized text is new; returns how many were added.
  std::size_t enqueue_questions(const std::vector<ExtrapolatedQuestion>& questions);

  // Oldest unasked question, marked asked.
  std::optional<ExtrapolatedQuestion> pop_question();

  // Nodes that came from (or absorbed events from) a given session.
  std::vector<const MemoryNode*> nodes_for_session(const std::string& session_id) const;

  nlohmann::json to_json() const;
  static MemoryGraph from_json(const nlohmann::json& doc);

  bool operator==(const MemoryGraph& other) const {
    return nodes_ == other.nodes_ && cache_ == other.cache_ && next_id_ == other.next_id_;
  }

  static constexpr int kSchemaVersion = 1;

 private:
  std::string allocate_id();
  static MemoryNode node_from_event(const Event& e, std::string id);
  static void absorb(MemoryNode& into, const MemoryNode& from);
  void rebuild_indexes();

  std::map<std::string, MemoryNode> nodes_;
  std::map<std::string, std::set<std::string>> person_index_;
  std::map<std::string, std::set<std::string>> date_index_;
  std::deque<ExtrapolatedQuestion> cache_;
  std::uint64_t next_id_ = 1;
};

inline constexpr const char* kUndatedKey = "undated";

struct ExtractionResult {
  std::vector<Event> events;
  int warnings = 0;
};

std::string extract_events_prompt(const Transcript& window);

// Parses every "N. ..." line of a model reply; malformed candidates are
// counted as warnings and skipped.
ExtractionResult parse_extraction(std::string_view reply);

ExtractionResult extract_events(const Transcript& window, Gateway& gateway, const GenerationParams& params,
                                const std::string& topic_id = {},
                                const std::optional<std::string>& session_id = std::nullopt);

std::string memory_node_info(const MemoryGraph& graph);
std::string explore_prompt(const MemoryGraph& graph);

struct ExtrapolationResult {
  std::vector<ExtrapolatedQuestion> questions;  // parsed from the reply
  std::size_t added = 0;                        // new entries in the cache
  int warnings = 0;
};

std::vector<std::string> parse_question_lines(std::string_view reply);

ExtrapolationResult extrapolate_questions(MemoryGraph& graph, Gateway& gateway, const GenerationParams& params,
                                          const std::string& topic_id = {});

}  // namespace memoir
