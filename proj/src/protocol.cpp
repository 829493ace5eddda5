#include "memoir/protocol.hpp"

#include <unordered_set>

#include "memoir/error.hpp"
#include "memoir/text.hpp"

namespace memoir {

InterviewProtocol::InterviewProtocol(std::vector<Area> areas) : areas_(std::move(areas)) { index(); }

void InterviewProtocol::index() {
  order_.clear();
  std::unordered_set<std::string> seen;
  for (const auto& area : areas_) {
    for (const auto& topic : area.topics) {
      if (!seen.insert(topic.id).second) {
        throw Error(ErrorCode::DuplicateTopicId, "duplicate topic id: " + topic.id);
      }
      if (topic.seed_questions.empty()) {
        throw Error(ErrorCode::EmptySeedQuestions, "topic without seed questions: " + topic.id);
      }
      order_.push_back(&topic);
    }
  }
}

const Topic* InterviewProtocol::find(const std::string& topic_id) const {
  for (const Topic* t : order_) {
    if (t->id == topic_id) return t;
  }
  return nullptr;
}

const Topic& InterviewProtocol::at(const std::string& topic_id) const {
  const Topic* t = find(topic_id);
  if (!t) throw Error(ErrorCode::UnknownTopic, "unknown topic: " + topic_id);
  return *t;
}

const Area& InterviewProtocol::area_of(const std::string& topic_id) const {
  for (const auto& area : areas_) {
    for (const auto& topic : area.topics) {
      if (topic.id == topic_id) return area;
    }
  }
  throw Error(ErrorCode::UnknownTopic, "unknown topic: " + topic_id);
}

int InterviewProtocol::ordinal_of(const std::string& topic_id) const {
  for (std::size_t i = 0; i < order_.size(); ++i) {
    if (order_[i]->id == topic_id) return static_cast<int>(i) + 1;
  }
  throw Error(ErrorCode::UnknownTopic, "unknown topic: " + topic_id);
}

InterviewProtocol load_protocol(const nlohmann::json& doc) {
  std::vector<Area> areas;
  try {
    for (const auto& a : doc.at("areas")) {
      Area area;
      area.name = a.at("name").get<std::string>();
      for (const auto& t : a.at("topics")) {
        Topic topic;
        topic.id = t.at("id").get<std::string>();
        topic.name = t.at("name").get<std::string>();
        topic.guidance = t.value("guidance", std::string{});
        topic.seed_questions = t.value("seed_questions", std::vector<std::string>{});
        if (topic.id.empty()) throw Error(ErrorCode::ParseError, "topic with empty id");
        area.topics.push_back(std::move(topic));
      }
      areas.push_back(std::move(area));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("protocol: ") + e.what());
  }
  return InterviewProtocol(std::move(areas));
}

InterviewProtocol load_protocol(const std::filesystem::path& path) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text::read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
  return load_protocol(doc);
}

nlohmann::json serialize_protocol(const InterviewProtocol& protocol) {
  nlohmann::json areas = nlohmann::json::array();
  for (const auto& area : protocol.areas()) {
    nlohmann::json topics = nlohmann::json::array();
    for (const auto& t : area.topics) {
      topics.push_back({{"id", t.id}, {"name", t.name}, {"guidance", t.guidance},
                        {"seed_questions", t.seed_questions}});
    }
    areas.push_back({{"name", area.name}, {"topics", std::move(topics)}});
  }
  return {{"areas", std::move(areas)}};
}

std::filesystem::path default_protocol_path() {
  return std::filesystem::path(MEMOIR_DATA_DIR) / "protocol" / "life_story_interview.json";
}

std::optional<std::string> next_topic(const InterviewProtocol& protocol,
                                      const std::set<std::string>& completed) {
  for (const auto& id : completed) {
    if (!protocol.find(id)) throw Error(ErrorCode::UnknownCompletedId, "unknown completed topic: " + id);
  }
  for (const Topic* t : protocol.topics()) {
    if (!completed.contains(t->id)) return t->id;
  }
  return std::nullopt;
}

std::string seed_questions_block(const Topic& topic) {
  std::string out = "====== Seed Questions Begin ======\n";
  for (std::size_t i = 0; i < topic.seed_questions.size(); ++i) {
    out += std::to_string(i + 1) + ". " + topic.seed_questions[i] + "\n";
  }
  out += "====== Seed Questions End ======";
  return out;
}

std::string session_system_prompt(const InterviewProtocol& protocol, const std::string& topic_id,
                                  const std::optional<std::string>& resumed_context,
                                  const std::optional<std::string>& strategy_preamble) {
  const Topic& topic = protocol.at(topic_id);
  std::string prompt = kInterviewerRole;
  if (resumed_context && !resumed_context->empty()) {
    prompt += "\n\n" + *resumed_context;
  }
  if (strategy_preamble && !strategy_preamble->empty()) {
    prompt += "\n\n" + *strategy_preamble;
  }
  prompt += "\n\n" + topic.guidance;
  prompt += "\n" + seed_questions_block(topic);
  return prompt;
}

}  // namespace memoir
