#include <gtest/gtest.h>

#include "memoir/context_manager.hpp"
#include "memoir/error.hpp"
#include "test_support.hpp"

using namespace memoir;
using memoir::testkit::Gen;
using memoir::testkit::mock_gateway;

namespace {

Transcript session_transcript(const std::string& tag) {
  return {{Role::Interviewer, "Question about " + tag + "?", 0}, {Role::User, "Answer about " + tag + ".", 1}};
}

SummaryOptions opts(int ordinal) {
  SummaryOptions o;
  o.ordinal = ordinal;
  o.session_id = "session-" + std::to_string(ordinal);
  return o;
}

std::size_t occurrences(const std::string& hay, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = hay.find(needle); pos != std::string::npos; pos = hay.find(needle, pos + needle.size())) ++n;
  return n;
}

}  // namespace

TEST(Summarize, FirstSessionScripted) {
  auto gw = mock_gateway({{"fallbacks", {{"summarize", "S1"}}}});
  const auto s = summarize_session(session_transcript("one"), std::nullopt, *gw, opts(1));
  EXPECT_EQ(s.ordinal, 1);
  EXPECT_EQ(s.text, "S1");
  EXPECT_EQ(s.basis, SummaryBasis::TranscriptOnly);
  EXPECT_FALSE(s.truncated);
}

TEST(Summarize, PromptTemplateLandmarks) {
  const auto p = summary_prompt(session_transcript("one"), std::nullopt);
  EXPECT_NE(p.find("====== Conversation Begin ======"), std::string::npos);
  EXPECT_NE(p.find("====== Conversation End ======"), std::string::npos);
  EXPECT_NE(p.find("Summarize the interactions between the doctor and the patient so far."), std::string::npos);
  EXPECT_NE(p.find("Output your summary only:"), std::string::npos);
}

TEST(Summarize, SecondSessionPromptHoldsPriorAndTranscript) {
  SessionSummary prior;
  prior.ordinal = 1;
  prior.text = "S1";
  const auto p = summary_prompt(session_transcript("two"), prior);
  const auto begin = p.find("====== Conversation Begin ======");
  const auto end = p.find("====== Conversation End ======");
  const auto s1 = p.find("S1");
  const auto t2 = p.find("Answer about two.");
  EXPECT_LT(begin, s1);
  EXPECT_LT(s1, t2);
  EXPECT_LT(t2, end);
}

TEST(Summarize, ChainReferencesOnlyPreviousSummary) {
  auto gw = mock_gateway({{"rules",
                           {{{"tag", "summarize"}, {"contains", "Answer about one."}, {"reply", "SUMMARY-ONE"}},
                            {{"tag", "summarize"}, {"contains", "Answer about two."}, {"reply", "SUMMARY-TWO"}},
                            {{"tag", "summarize"}, {"reply", "SUMMARY-THREE"}}}}});
  std::vector<std::string> prompts;
  gw->set_tap([&](const CompletionRequest& r, const std::string&) { prompts.push_back(r.messages.back().text); });
  std::optional<SessionSummary> prior;
  for (int k = 1; k <= 3; ++k) {
    prior = summarize_session(session_transcript(k == 1 ? "one" : k == 2 ? "two" : "three"), prior, *gw, opts(k));
  }
  ASSERT_EQ(prompts.size(), 3u);
  EXPECT_EQ(prompts[0].find("SUMMARY-"), std::string::npos);
  EXPECT_NE(prompts[1].find("SUMMARY-ONE"), std::string::npos);
  EXPECT_NE(prompts[2].find("SUMMARY-TWO"), std::string::npos);
  EXPECT_EQ(prompts[2].find("SUMMARY-ONE"), std::string::npos);
  EXPECT_EQ(prompts[2].find("Answer about one."), std::string::npos);
  EXPECT_EQ(prior->basis, SummaryBasis::TranscriptPlusPrior);
}

TEST(Summarize, EmptyTranscriptRejected) {
  auto gw = mock_gateway({{"fallbacks", {{"*", "x"}}}});
  EXPECT_THROW(summarize_session({}, std::nullopt, *gw, opts(1)), Error);
}

TEST(Summarize, CapTruncatesAtSentenceBoundary) {
  auto gw = mock_gateway({{"fallbacks", {{"summarize", "One two three. Four five six. Seven eight nine."}}}});
  auto o = opts(1);
  o.token_cap = 9;
  const auto s = summarize_session(session_transcript("one"), std::nullopt, *gw, o);
  EXPECT_EQ(s.text, "One two three. Four five six.");
  EXPECT_TRUE(s.truncated);
}

TEST(Summarize, CapHoldsForRandomText) {
  Gen g(301);
  for (int i = 0; i < 300; ++i) {
    std::string body;
    const int n = g.uniform(1, 8);
    for (int k = 0; k < n; ++k) body += (k ? " " : "") + g.sentence(1, 12) + ".";
    const auto cap = static_cast<std::size_t>(g.uniform(1, 40));
    const auto out = cap_tokens_at_sentence(body, cap, default_tokenizer());
    EXPECT_LE(count_tokens(out.text), cap);
    EXPECT_EQ(out.truncated, count_tokens(body) > cap);
    EXPECT_EQ(body.compare(0, out.text.size(), out.text), 0);
  }
}

TEST(Resume, AbsentStaysAbsent) { EXPECT_EQ(resume_context(std::nullopt), std::nullopt); }

TEST(Resume, SummaryAppearsOnce) {
  SessionSummary s;
  s.text = "S1";
  const auto block = resume_context(s);
  ASSERT_TRUE(block);
  EXPECT_EQ(occurrences(*block, "S1"), 1u);
  EXPECT_EQ(occurrences(*block, "Summary of Previous Conversation Begin"), 1u);
}

TEST(Resume, NeverNestsDelimiters) {
  Gen g(302);
  for (int i = 0; i < 200; ++i) {
    const std::string text = "BEGINMARK " + g.sentence() + " ENDMARK";
    std::optional<std::string> block = resume_context_text(text);
    const int depth = g.uniform(1, 4);
    for (int d = 0; d < depth; ++d) block = resume_context_text(*block);
    ASSERT_TRUE(block);
    EXPECT_EQ(occurrences(*block, "Summary of Previous Conversation Begin"), 1u);
    EXPECT_EQ(occurrences(*block, "Summary of Previous Conversation End"), 1u);
    EXPECT_EQ(occurrences(*block, text), 1u);
  }
}

TEST(SummaryJson, RoundTrip) {
  SessionSummary s{"session-03", 3, "text", SummaryBasis::TranscriptPlusPrior, true};
  EXPECT_EQ(summary_from_json(to_json(s)), s);
}
