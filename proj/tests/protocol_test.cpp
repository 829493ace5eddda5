#include <gtest/gtest.h>

#include <set>

#include "memoir/context_manager.hpp"
#include "memoir/error.hpp"
#include "memoir/protocol.hpp"
#include "test_support.hpp"

using namespace memoir;

namespace {

const InterviewProtocol& shipped() {
  static const InterviewProtocol p = load_protocol(default_protocol_path());
  return p;
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::IoError;
}

nlohmann::json one_topic(const std::string& id, std::vector<std::string> seeds = {"Q1?"}) {
  return {{"id", id}, {"name", id}, {"guidance", "Talk about " + id + "."}, {"seed_questions", seeds}};
}

}  // namespace

TEST(Protocol, ShippedFileShape) {
  const auto& p = shipped();
  ASSERT_EQ(p.areas().size(), 5u);
  EXPECT_EQ(p.topic_count(), 23u);
  std::set<std::string> ids;
  for (const Topic* t : p.topics()) {
    EXPECT_FALSE(t->seed_questions.empty()) << t->id;
    ids.insert(t->id);
  }
  EXPECT_EQ(ids.size(), 23u);
}

TEST(Protocol, ChallengesArea) {
  const auto& area = shipped().area_of("health");
  EXPECT_EQ(area.name, "Challenges");
  std::vector<std::string> names;
  for (const auto& t : area.topics) names.push_back(t.name);
  ASSERT_EQ(names.size(), 4u);
  EXPECT_EQ(names[0], "Life Challenge");
  EXPECT_EQ(names[1], "Health");
  EXPECT_EQ(names[2], "Loss");
  EXPECT_NE(names[3].find("Regret"), std::string::npos);
}

TEST(Protocol, AreaOrder) {
  std::vector<std::string> names;
  for (const auto& a : shipped().areas()) names.push_back(a.name);
  EXPECT_EQ(names.front(), "Life Chapters");
  EXPECT_EQ(names[2], "Future Script");
  EXPECT_EQ(names[3], "Challenges");
  EXPECT_EQ(names.back(), "Personal Ideology");
}

TEST(Protocol, MinimalDocument) {
  const auto p = load_protocol(nlohmann::json{{"areas", {{{"name", "A"}, {"topics", {one_topic("only")}}}}}});
  EXPECT_EQ(p.topic_count(), 1u);
  EXPECT_EQ(next_topic(p, {}), "only");
}

TEST(Protocol, Errors) {
  const nlohmann::json dup = {{"areas", {{{"name", "A"}, {"topics", {one_topic("high_point"), one_topic("high_point")}}}}}};
  EXPECT_EQ(code_of([&] { load_protocol(dup); }), ErrorCode::DuplicateTopicId);
  const nlohmann::json empty = {{"areas", {{{"name", "A"}, {"topics", {one_topic("t", {})}}}}}};
  EXPECT_EQ(code_of([&] { load_protocol(empty); }), ErrorCode::EmptySeedQuestions);
  EXPECT_EQ(code_of([&] { load_protocol(nlohmann::json{{"nope", 1}}); }), ErrorCode::ParseError);
  EXPECT_EQ(code_of([&] { next_topic(shipped(), {"not_a_topic"}); }), ErrorCode::UnknownCompletedId);
  EXPECT_EQ(code_of([&] { session_system_prompt(shipped(), "nope", std::nullopt, std::nullopt); }),
            ErrorCode::UnknownTopic);
}

TEST(Protocol, RoundTrip) {
  const auto& p = shipped();
  EXPECT_EQ(load_protocol(serialize_protocol(p)), p);
}

TEST(Protocol, NextTopicVisitsAllInFileOrder) {
  const auto& p = shipped();
  EXPECT_EQ(next_topic(p, {}), "life_chapters");
  std::set<std::string> done;
  std::vector<std::string> visited;
  while (auto t = next_topic(p, done)) {
    visited.push_back(*t);
    done.insert(*t);
  }
  ASSERT_EQ(visited.size(), 23u);
  for (std::size_t i = 0; i < visited.size(); ++i) EXPECT_EQ(visited[i], p.topics()[i]->id);
  EXPECT_EQ(next_topic(p, done), std::nullopt);
}

TEST(Protocol, FirstThreeDoneGivesFourth) {
  const auto& p = shipped();
  std::set<std::string> done{p.topics()[0]->id, p.topics()[1]->id, p.topics()[2]->id};
  EXPECT_EQ(next_topic(p, done), p.topics()[3]->id);
  EXPECT_EQ(next_topic(p, done), "turning_point");
}

TEST(Protocol, NextTopicIsFirstGapForRandomSets) {
  const auto& p = shipped();
  testkit::Gen g(201);
  for (int i = 0; i < 300; ++i) {
    std::set<std::string> done;
    for (const Topic* t : p.topics()) {
      if (g.coin(0.6)) done.insert(t->id);
    }
    std::optional<std::string> expected;
    for (const Topic* t : p.topics()) {
      if (!done.contains(t->id)) {
        expected = t->id;
        break;
      }
    }
    EXPECT_EQ(next_topic(p, done), expected);
  }
}

TEST(SystemPrompt, FirstSessionHasNoSummarySection) {
  const auto prompt = session_system_prompt(shipped(), "life_chapters", std::nullopt, std::nullopt);
  EXPECT_EQ(prompt.find("Summary of Previous Conversation"), std::string::npos);
  EXPECT_EQ(prompt.rfind(kInterviewerRole, 0), 0u);
}

TEST(SystemPrompt, ResumedSummaryIsDelimited) {
  SessionSummary s;
  s.ordinal = 1;
  s.text = "S";
  const auto prompt = session_system_prompt(shipped(), "high_point", resume_context(s), std::nullopt);
  const auto begin = prompt.find("====== Summary of Previous Conversation Begin ======");
  const auto end = prompt.find("====== Summary of Previous Conversation End ======");
  ASSERT_NE(begin, std::string::npos);
  ASSERT_NE(end, std::string::npos);
  const auto body = prompt.substr(begin, end - begin);
  EXPECT_NE(body.find("\nS\n"), std::string::npos);
}

TEST(SystemPrompt, SeedQuestionsInOrder) {
  const auto& topic = shipped().at("high_point");
  ASSERT_EQ(topic.seed_questions.size(), 4u);
  EXPECT_NE(topic.seed_questions[0].find("peak experience in your life"), std::string::npos);
  const auto prompt = session_system_prompt(shipped(), "high_point", std::nullopt, std::nullopt);
  std::size_t at = 0;
  for (const auto& q : topic.seed_questions) {
    const auto pos = prompt.find(q, at);
    ASSERT_NE(pos, std::string::npos) << q;
    at = pos + q.size();
  }
}

TEST(SystemPrompt, SectionOrder) {
  SessionSummary s;
  s.text = "SUMMARYTEXT";
  const auto prompt = session_system_prompt(shipped(), "loss", resume_context(s), std::string("PREAMBLE"));
  const auto role = prompt.find(kInterviewerRole);
  const auto summary = prompt.find("SUMMARYTEXT");
  const auto preamble = prompt.find("PREAMBLE");
  const auto guidance = prompt.find(shipped().at("loss").guidance);
  const auto seeds = prompt.find("Seed Questions Begin");
  EXPECT_LT(role, summary);
  EXPECT_LT(summary, preamble);
  EXPECT_LT(preamble, guidance);
  EXPECT_LT(guidance, seeds);
}

TEST(SystemPrompt, PureFunction) {
  for (const Topic* t : shipped().topics()) {
    EXPECT_EQ(session_system_prompt(shipped(), t->id, std::string("ctx"), std::nullopt),
              session_system_prompt(shipped(), t->id, std::string("ctx"), std::nullopt));
  }
}
