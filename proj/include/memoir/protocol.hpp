#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace memoir {

struct Topic {
  std::string id;
  std::string name;
  std::string guidance;
  std::vector<std::string> seed_questions;

  bool operator==(const Topic&) const = default;
};

struct Area {
  std::string name;
  std::vector<Topic> topics;

  bool operator==(const Area&) const = default;
};

// Areas -> topics -> seed questions, immutable after load.
class InterviewProtocol {
 public:
  InterviewProtocol() = default;
  explicit InterviewProtocol(std::vector<Area> areas);

  const std::vector<Area>& areas() const { return areas_; }
  std::size_t topic_count() const { return order_.size(); }

  // Topics flattened in file order.
  const std::vector<const Topic*>& topics() const { return order_; }

  const Topic* find(const std::string& topic_id) const;
  const Topic& at(const std::string& topic_id) const;  // throws UnknownTopic
  const Area& area_of(const std::string& topic_id) const;
  int ordinal_of(const std::string& topic_id) const;   // 1-based

  bool operator==(const InterviewProtocol& other) const { return areas_ == other.areas_; }

 private:
  void index();

  std::vector<Area> areas_;
  std::vector<const Topic*> order_;
};

InterviewProtocol load_protocol(const nlohmann::json& doc);
InterviewProtocol load_protocol(const std::filesystem::path& path);
nlohmann::json serialize_protocol(const InterviewProtocol& protocol);

std::filesystem::path default_protocol_path();

// Returns the first uncompleted topic id in protocol order, nullopt when done.
std::optional<std::string> next_topic(const InterviewProtocol& protocol,
                                      const std::set<std::string>& completed);

struct SessionPlan {
  std::string topic_id;
  int ordinal = 0;
  std::string system_prompt;
};

inline constexpr const char* kInterviewerRole =
    "You are a biographer, interviewing this person to help them write their autobiography.";

// Role statement, optional summary section, optional strategy preamble,
// topic guidance and the seed-question block, in that order.
std::string session_system_prompt(const InterviewProtocol& protocol, const std::string& topic_id,
                                  const std::optional<std::string>& resumed_context,
                                  const std::optional<std::string>& strategy_preamble);

std::string seed_questions_block(const Topic& topic);

}  // namespace memoir
