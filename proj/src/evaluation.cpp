#include "memoir/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <random>
#include <regex>
#include <set>
#include <sstream>

#include "memoir/dates.hpp"
#include "memoir/error.hpp"
#include "memoir/text.hpp"

namespace memoir {

namespace {

constexpr const char* kGroundTruthTemplate =
    "Summarize the following paragraph from an autobiography in one or two sentences. Keep the people, places and "
    "dates it mentions.\n"
    "====== Paragraph Begin ======\n"
    "{paragraph}\n"
    "====== Paragraph End ======\n"
    "Output the summary only:";

constexpr const char* kRelevanceTemplate =
    "Your task is to rate the semantic equivalence between two events.\n\n"
    "Evaluation Criteria:\n\n"
    "Here's the revised prompt focusing on assessing the relevance of the extracted event to the document:\n\n"
    "Relevance (0/1): Assess the relevance of the extracted event to the original user response on the following "
    "two-point scale:\n"
    "- 0: Irrelevant: The extracted event does not relate to the user's response or significantly deviates from the "
    "main themes and points. It may include unrelated information or fail to capture the essence of the user's "
    "message.\n"
    "- 1: Relevant: The extracted event is connected to the user's response and reflects the key themes or points. "
    "It may include minor details that do not detract from the overall relevance.\n\n"
    "Now, I will provide you with a user query and the model's response to that instruction. Please review the "
    "model's response in light of the evaluation criteria:\n"
    "Extracted Event: {event}\n"
    "User Response: {user_response}\n\n"
    "Evaluation Form (scores ONLY):\n\n"
    "#thescore: your score here";

constexpr const char* kJudgeHead =
    "Please act as an impartial judge and evaluate the quality of the responses provided by two interviewers to the "
    "user during an interviewing-for-autobiography conversation.\n";

constexpr const char* kJudgeTail =
    "Begin your evaluation by comparing the two responses and provide a short explanation. Avoid any position biases "
    "and ensure that the order in which the responses were presented does not influence your decision.\n"
    "Do not allow the length of the responses to influence your evaluation. Do not favor certain names of the "
    "assistants. Be as objective as possible. After providing your explanation, output your\n"
    "final verdict by strictly following this format: \"[[A]]\" if assistant A is better, \"[[B]]\" if assistant B "
    "is better, and \"[[C]]\" for a tie.\n\n";

constexpr const char* kBookHead =
    "Please act as an impartial judge and evaluate the quality of two autobiographies.\n";

constexpr const char* kBookVerdict =
    "Do not allow the length of the autobiography to influence your evaluation. Do not favor certain names of the "
    "assistants. Be as objective as possible. After providing your explanation, output your\n"
    "final verdict by strictly following this format: \"[[A]]\" if autobiography A is better, \"[[B]]\" if "
    "autobiography B is better, and \"[[C]]\" for a tie.\n\n";

std::string conversation_blocks(bool extra_gap) {
  std::string s =
      "[The Start of interviewer A’s conversation]\n\n{conv1}\n\n[The end of interviewer A’s "
      "conversation]\n\n";
  if (extra_gap) s += "\n";
  s += "[The Start of interviewer B’s conversation]\n\n{conv2}\n\n[The end of interviewer B’s conversation]";
  return s;
}

constexpr const char* kBookBlocks =
    "[The Start of Autobiography A]\n\n{conv1}\n\n[The End of Autobiography A]\n\n"
    "[The Start of Autobiography B]\n\n{conv2}\n\n[The end of Autobiography B]";

std::string judge_template(JudgeDimension d) {
  switch (d) {
    case JudgeDimension::Fluency:
      return std::string(kJudgeHead) +
             "You should choose the conversation that the interviewer's responses are more the quality of the "
             "response in terms of grammar, spelling, punctuation, word choice, and sentence structure.\n" +
             kJudgeTail + conversation_blocks(true);
    case JudgeDimension::Identification:
      return std::string(kJudgeHead) +
             "You should choose a conversation in which the interviewer's questions are more quality of balances "
             "detailed, probing questions with more general ones to cover a wide range of topics, ensuring questions "
             "are clear, concise, and easily understood. Also uses open-ended questions to elicit detailed and "
             "comprehensive responses.\n" +
             kJudgeTail + conversation_blocks(false);
    case JudgeDimension::Comforting:
      return std::string(kJudgeHead) +
             "You should choose the conversation that the interviewer's responses are more the quality of showing "
             "genuine interest, acknowledging responses, asking follow-up questions when necessary, and "
             "demonstrating understanding and sensitivity, especially when discussing personal or difficult "
             "topics.\n" +
             kJudgeTail + conversation_blocks(false);
    case JudgeDimension::Insightfulness:
      return std::string(kBookHead) +
             "You should choose an autobiography that is more the quality of insightful, delivering profound and "
             "meaningful perceptions, and expressing a deep understanding of the experiences and events that have "
             "shaped the author's life.\n"
             "Begin your evaluation by comparing the two autobiographies and provide a short explanation. Avoid any "
             "position biases and ensure that the order in which the autobiography was presented does not influence "
             "your decision.\n" +
             kBookVerdict + kBookBlocks;
    case JudgeDimension::Narrativity:
      return std::string(kBookHead) +
             "You should choose the autobiography that are more narrative, presenting the author's life story in a "
             "cohesive, structured, and engaging manner, allowing readers to follow the author's journey through "
             "life events and experiences seamlessly.\n"
             "Begin your evaluation by comparing the two autobiographies and provide a short explanation. Avoid any "
             "position biases and ensure that the order in which the autobiography were presented does not "
             "influence your decision.\n" +
             kBookVerdict + kBookBlocks;
    case JudgeDimension::EmotionalImpact:
      return std::string(kBookHead) +
             "You should choose the autobiography that are more emotional impact, deeply moving its readers by "
             "evoking strong feelings, typically as a result of relatable experiences, vivid storytelling, and "
             "expressions of intense emotions from the author's life.\n"
             "Begin your evaluation by comparing the two autobiographies and provide a short explanation. Avoid any "
             "position biases and ensure that the order in which the autobiography were presented does not "
             "influence your decision.\n" +
             kBookVerdict + kBookBlocks;
  }
  return {};
}

std::set<std::string> words_of(std::string_view s) {
  std::set<std::string> out;
  std::string cur;
  for (char ch : s) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c) || c >= 0x80) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.insert(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.insert(std::move(cur));
  return out;
}

double jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
  if (a.empty() && b.empty()) return 0.0;
  std::size_t common = 0;
  for (const auto& w : a) common += b.count(w);
  return static_cast<double>(common) / static_cast<double>(a.size() + b.size() - common);
}

std::string fixed(double v, int digits = 1) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

std::size_t matched_gt(const std::vector<Event>& candidates, const EventSet& e_gt) {
  std::set<std::string> keys;
  for (const auto& e : candidates) {
    if (!e.date_key.empty()) keys.insert(e.date_key);
  }
  return static_cast<std::size_t>(std::count_if(e_gt.events.begin(), e_gt.events.end(), [&](const Event& g) {
    return !g.date_key.empty() && keys.count(g.date_key) > 0;
  }));
}

std::vector<std::string> user_turns(const SessionRecord& s) {
  std::vector<std::string> out;
  for (const auto& m : s.transcript) {
    if (m.role == Role::User) out.push_back(m.text);
  }
  return out;
}

}  // namespace

// ---- ground truth ----------------------------------------------------------

std::vector<std::string> split_paragraphs(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (const auto& line : text::split_lines(text)) {
    if (text::trim(line).empty()) {
      if (!text::trim(cur).empty()) out.push_back(text::trim(cur));
      cur.clear();
    } else {
      if (!cur.empty()) cur += "\n";
      cur += line;
    }
  }
  if (!text::trim(cur).empty()) out.push_back(text::trim(cur));
  return out;
}

std::string ground_truth_prompt(std::string_view paragraph) {
  std::string p = kGroundTruthTemplate;
  text::replace_all(p, "{paragraph}", std::string(paragraph));
  return p;
}

EventSet extract_ground_truth(std::string_view book_text, Gateway& gateway, const GenerationParams& params) {
  EventSet out{EventSetKind::GroundTruth, {}};
  std::map<std::string, std::size_t> by_key;
  for (const auto& para : split_paragraphs(book_text)) {
    const auto found = find_dates(para);
    if (found.empty()) continue;
    const std::string summary =
        text::trim(gateway.complete({{Role::User, ground_truth_prompt(para), 0}}, params, CallSite::GroundTruth));
    if (summary.empty()) throw Error(ErrorCode::EmptyModelReply, "empty ground-truth summary");
    for (const auto& m : found) {
      const std::string key = m.key.str();
      auto it = by_key.find(key);
      if (it != by_key.end()) {
        auto& desc = out.events[it->second].description;
        if (desc.find(summary) == std::string::npos) desc += " / " + summary;
        continue;
      }
      Event e;
      char id[32];
      std::snprintf(id, sizeof id, "gt-%04zu", out.events.size() + 1);
      e.id = id;
      e.date_raw = para.substr(m.begin, m.end - m.begin);
      e.date_key = key;
      e.description = summary;
      e.source = EventSource::GroundTruth;
      by_key.emplace(key, out.events.size());
      out.events.push_back(std::move(e));
    }
  }
  return out;
}

// ---- coverage and correctness ----------------------------------------------

double coverage(const EventSet& e_intw, const EventSet& e_gt) {
  if (e_gt.events.empty()) throw Error(ErrorCode::EmptyGroundTruth, "ground-truth event set is empty");
  return 100.0 * static_cast<double>(matched_gt(e_intw.events, e_gt)) / static_cast<double>(e_gt.events.size());
}

std::string relevance_prompt(const Event& event, const std::vector<std::string>& user_responses) {
  std::string p = kRelevanceTemplate;
  text::replace_all(p, "{event}", format_event_line(event));
  text::replace_all(p, "{user_response}", text::join(user_responses, "\n"));
  return p;
}

int parse_score(std::string_view reply) {
  static const std::regex re(R"(#\s*thescore\s*:\s*\**\s*([01])\b)", std::regex::icase);
  const std::string s(reply);
  std::smatch m;
  if (std::regex_search(s, m, re)) return m[1].str() == "1" ? 1 : 0;
  // A bare single bit is accepted as the whole reply.
  const std::string t = text::trim(s);
  if (t == "0" || t == "1") return t == "1" ? 1 : 0;
  throw Error(ErrorCode::UnparseableScore, "no #thescore in reply: " + t.substr(0, 80));
}

int judge_event_correct(const Event& event, const std::vector<std::string>& user_responses, Gateway& judge,
                        const GenerationParams& params) {
  return parse_score(
      judge.complete({{Role::User, relevance_prompt(event, user_responses), 0}}, params, CallSite::Relevance));
}

EventSet select_correct(const EventSet& e_intw, const std::vector<SessionRecord>& sessions, Gateway& judge,
                        const GenerationParams& params) {
  std::map<std::string, std::vector<std::string>> responses;
  for (const auto& s : sessions) responses[s.session_id] = user_turns(s);
  EventSet out{EventSetKind::Correct, {}};
  for (const auto& e : e_intw.events) {
    if (!e.session_id) continue;
    auto it = responses.find(*e.session_id);
    if (it == responses.end() || it->second.empty()) continue;
    if (judge_event_correct(e, it->second, judge, params) == 1) out.events.push_back(e);
  }
  return out;
}

CorrectnessScores correctness_scores(const EventSet& e_intw, const EventSet& e_correct, const EventSet& e_gt) {
  if (e_intw.events.empty()) throw Error(ErrorCode::EmptyInterviewEvents, "interview event set is empty");
  if (e_gt.events.empty()) throw Error(ErrorCode::EmptyGroundTruth, "ground-truth event set is empty");
  std::set<std::string> ids;
  for (const auto& e : e_intw.events) ids.insert(e.id);
  for (const auto& e : e_correct.events) {
    if (!ids.count(e.id)) throw Error(ErrorCode::InvalidRequest, "correct event not in interview set: " + e.id);
  }
  CorrectnessScores s;
  s.precision = 100.0 * static_cast<double>(e_correct.events.size()) / static_cast<double>(e_intw.events.size());
  s.recall = 100.0 * static_cast<double>(matched_gt(e_correct.events, e_gt)) / static_cast<double>(e_gt.events.size());
  s.f1 = s.precision + s.recall == 0.0 ? 0.0 : 2.0 * s.precision * s.recall / (s.precision + s.recall);
  return s;
}

EventSet posthoc_events(const std::vector<SessionRecord>& sessions, Gateway& gateway, const GenerationParams& params) {
  EventSet out{EventSetKind::Interview, {}};
  std::size_t n = 0;
  for (const auto& s : sessions) {
    const bool has_user =
        std::any_of(s.transcript.begin(), s.transcript.end(), [](const auto& m) { return m.role == Role::User; });
    if (!has_user) continue;
    auto result = extract_events(s.transcript, gateway, params, s.topic_id, s.session_id);
    for (auto& e : result.events) {
      char id[32];
      std::snprintf(id, sizeof id, "ph-%06zu", ++n);
      e.id = id;
      out.events.push_back(std::move(e));
    }
  }
  return out;
}

EventSet interview_events(const InterviewRecord& record, EngineMode mode, Gateway& gateway,
                          const GenerationParams& params) {
  if (mode == EngineMode::Guided && record.graph.size() > 0) {
    EventSet out{EventSetKind::Interview, {}};
    for (const auto& [id, node] : record.graph.nodes()) out.events.push_back(node.event);
    return out;
  }
  return posthoc_events(record.sessions, gateway, params);
}

// ---- pairwise judging -------------------------------------------------------

std::string_view to_string(JudgeDimension d) {
  switch (d) {
    case JudgeDimension::Fluency: return "fluency";
    case JudgeDimension::Identification: return "identification";
    case JudgeDimension::Comforting: return "comforting";
    case JudgeDimension::Insightfulness: return "insightfulness";
    case JudgeDimension::Narrativity: return "narrativity";
    case JudgeDimension::EmotionalImpact: return "emotional_impact";
  }
  return "unknown";
}

std::optional<JudgeDimension> judge_dimension_from_string(std::string_view name) {
  for (auto d : kAllDimensions) {
    if (to_string(d) == name) return d;
  }
  return std::nullopt;
}

std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::Left: return "left";
    case Verdict::Right: return "right";
    case Verdict::Tie: return "tie";
  }
  return "unknown";
}

std::string judge_prompt(JudgeDimension dimension, const std::string& shown_a, const std::string& shown_b) {
  std::string p = judge_template(dimension);
  // conv2 first so text inside conv1 is never rescanned.
  const auto pos2 = p.find("{conv2}");
  p.replace(pos2, 7, shown_b);
  const auto pos1 = p.find("{conv1}");
  p.replace(pos1, 7, shown_a);
  return p;
}

bool swap_for_seed(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return (rng() & 1U) != 0;
}

char parse_verdict_token(std::string_view reply) {
  std::size_t best = std::string_view::npos;
  char which = 0;
  for (char c : {'A', 'B', 'C'}) {
    const std::string token = std::string("[[") + c + "]]";
    const auto pos = reply.rfind(token);
    if (pos != std::string_view::npos && (best == std::string_view::npos || pos > best)) {
      best = pos;
      which = c;
    }
  }
  if (which == 0) throw Error(ErrorCode::UnparseableVerdict, "no [[A]]/[[B]]/[[C]] in judge reply");
  return which;
}

JudgeVerdict pairwise_judge(const JudgeItem& left, const JudgeItem& right, JudgeDimension dimension, Gateway& judge,
                            std::uint64_t rng_seed, const GenerationParams& params) {
  JudgeVerdict v;
  v.dimension = dimension;
  v.seed = rng_seed;
  v.swapped = swap_for_seed(rng_seed);
  const JudgeItem& first = v.swapped ? right : left;
  const JudgeItem& second = v.swapped ? left : right;
  v.presented_order = {first.id, second.id};

  const std::string reply =
      judge.complete({{Role::User, judge_prompt(dimension, first.text, second.text), 0}}, params, CallSite::Judge,
                     std::string(to_string(dimension)));
  const char token = parse_verdict_token(reply);
  if (token == 'C') {
    v.verdict = Verdict::Tie;
  } else {
    const bool first_won = token == 'A';
    v.verdict = first_won != v.swapped ? Verdict::Left : Verdict::Right;
  }
  std::string explanation = reply;
  const std::string tok = std::string("[[") + token + "]]";
  const auto pos = explanation.rfind(tok);
  explanation.erase(pos, tok.size());
  v.explanation = text::trim(explanation);
  return v;
}

double RateCounts::wr() const {
  if (total() == 0) throw Error(ErrorCode::EmptyVerdictList, "no verdicts");
  return 100.0 * static_cast<double>(wins) / static_cast<double>(total());
}

double RateCounts::lr() const {
  if (total() == 0) throw Error(ErrorCode::EmptyVerdictList, "no verdicts");
  return 100.0 * static_cast<double>(losses) / static_cast<double>(total());
}

double RateCounts::tie() const {
  if (total() == 0) throw Error(ErrorCode::EmptyVerdictList, "no verdicts");
  return 100.0 * static_cast<double>(ties) / static_cast<double>(total());
}

std::map<JudgeDimension, RateCounts> win_loss_rates(const std::vector<JudgeVerdict>& verdicts, Verdict ours) {
  if (verdicts.empty()) throw Error(ErrorCode::EmptyVerdictList, "no verdicts to tally");
  if (ours == Verdict::Tie) throw Error(ErrorCode::InvalidRequest, "our side must be left or right");
  std::map<JudgeDimension, RateCounts> out;
  for (const auto& v : verdicts) {
    auto& c = out[v.dimension];
    if (v.verdict == Verdict::Tie) {
      ++c.ties;
    } else if (v.verdict == ours) {
      ++c.wins;
    } else {
      ++c.losses;
    }
  }
  return out;
}

std::vector<JudgeVerdict> judge_against_random_opponents(const std::vector<JudgeItem>& ours,
                                                         const std::vector<JudgeItem>& theirs,
                                                         JudgeDimension dimension, Gateway& judge,
                                                         std::uint64_t seed, const GenerationParams& params) {
  if (theirs.empty()) throw Error(ErrorCode::InvalidRequest, "no opponents to compare against");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, theirs.size() - 1);
  std::vector<JudgeVerdict> out;
  out.reserve(ours.size());
  for (const auto& item : ours) {
    const std::size_t j = pick(rng);
    out.push_back(pairwise_judge(item, theirs[j], dimension, judge, rng(), params));
  }
  return out;
}

// ---- valid rounds -------------------------------------------------------------

int count_rounds(const Transcript& transcript) {
  return static_cast<int>(std::count_if(transcript.begin(), transcript.end(),
                                        [](const ChatMessage& m) { return m.role == Role::Interviewer; }));
}

double valid_round_stats(const std::vector<Transcript>& transcripts, const std::vector<RoundMark>& invalid) {
  std::size_t total = 0;
  for (const auto& t : transcripts) total += static_cast<std::size_t>(count_rounds(t));
  if (total == 0) throw Error(ErrorCode::ZeroTotal, "no interviewer rounds");
  const std::set<RoundMark> marks(invalid.begin(), invalid.end());
  for (const auto& m : marks) {
    if (m.transcript >= transcripts.size() || m.round < 1 || m.round > count_rounds(transcripts[m.transcript])) {
      throw Error(ErrorCode::InvalidRequest, "invalid-round mark out of range: transcript " +
                                                 std::to_string(m.transcript) + " round " + std::to_string(m.round));
    }
  }
  return 100.0 * static_cast<double>(total - marks.size()) / static_cast<double>(total);
}

std::vector<RoundMark> repetition_marks(const std::vector<Transcript>& transcripts, double threshold) {
  std::vector<RoundMark> out;
  for (std::size_t t = 0; t < transcripts.size(); ++t) {
    std::vector<std::set<std::string>> seen;
    int round = 0;
    for (const auto& m : transcripts[t]) {
      if (m.role != Role::Interviewer) continue;
      ++round;
      auto words = words_of(m.text);
      const bool repeated =
          std::any_of(seen.begin(), seen.end(), [&](const auto& prev) { return jaccard(words, prev) > threshold; });
      if (repeated) out.push_back({t, round});
      seen.push_back(std::move(words));
    }
  }
  return out;
}

std::vector<RoundMark> load_round_annotations(const nlohmann::json& doc) {
  std::vector<RoundMark> out;
  try {
    for (const auto& a : doc.at("annotations")) {
      const auto t = a.at("transcript").get<std::size_t>();
      for (const auto& r : a.at("invalid_rounds")) out.push_back({t, r.get<int>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("round annotations: ") + e.what());
  }
  return out;
}

Transcript parse_labeled_transcript(std::string_view body) {
  Transcript out;
  int turn = 0;
  auto strip_quotes = [](std::string s) {
    s = text::trim(s);
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
    return text::trim(s);
  };
  for (const auto& para : split_paragraphs(body)) {
    std::string p = text::trim(para);
    Role role;
    std::size_t skip = 0;
    if (text::starts_with_ci(p, "Chatbot:")) {
      role = Role::Interviewer, skip = 8;
    } else if (text::starts_with_ci(p, "Interviewer:")) {
      role = Role::Interviewer, skip = 12;
    } else if (text::starts_with_ci(p, "User:")) {
      role = Role::User, skip = 5;
    } else if (!out.empty()) {
      out.back().text += "\n" + p;
      continue;
    } else {
      throw Error(ErrorCode::ParseError, "transcript paragraph without a speaker label");
    }
    out.push_back({role, strip_quotes(p.substr(skip)), turn++});
  }
  return out;
}

// ---- conversation statistics ----------------------------------------------------

ConversationStats conversation_stats(const std::vector<InterviewRecord>& records, const Tokenizer& tokenizer,
                                     const std::optional<std::vector<std::size_t>>& event_counts) {
  if (event_counts && event_counts->size() != records.size()) {
    throw Error(ErrorCode::InvalidRequest, "event_counts must have one entry per record");
  }
  ConversationStats s;
  for (std::size_t i = 0; i < records.size(); ++i) {
    for (const auto& session : records[i].sessions) {
      ++s.sessions;
      s.turns_total += session.transcript.size();
      for (const auto& m : session.transcript) s.tokens_total += count_tokens(m.text, tokenizer);
    }
    s.events_total += event_counts ? (*event_counts)[i] : records[i].graph.size();
  }
  if (s.sessions > 0) s.tokens_per_conv_avg = static_cast<double>(s.tokens_total) / static_cast<double>(s.sessions);
  if (s.events_total > 0) {
    s.event_token_usage_avg = static_cast<double>(s.tokens_total) / static_cast<double>(s.events_total);
  }
  return s;
}

// ---- emotion distribution ---------------------------------------------------------

ConditionDistribution distribution_of(const std::vector<EmotionReading>& readings) {
  ConditionDistribution d;
  d.turns = readings.size();
  for (auto e : kAllEmotions) {
    EmotionStats st;
    st.turns = readings.size();
    double sum = 0.0;
    for (const auto& r : readings) {
      const auto& entry = r[e];
      if (!entry.present) continue;
      const double v = std::clamp(entry.intensity.value_or(0.0), 0.0, 1.0);
      ++st.present;
      sum += v;
      ++st.histogram[std::min<std::size_t>(9, static_cast<std::size_t>(std::floor(v * 10.0)))];
    }
    if (st.present > 0) st.mean_present = sum / static_cast<double>(st.present);
    if (st.turns > 0) st.mean_all = sum / static_cast<double>(st.turns);
    d.per_emotion[e] = st;
  }
  auto valence_mean = [&](Valence sign) {
    double sum = 0.0;
    int n = 0;
    for (auto e : kAllEmotions) {
      if (valence_of(e) != sign) continue;
      sum += d.per_emotion[e].mean_all;
      ++n;
    }
    return n ? sum / n : 0.0;
  };
  d.positive_mean = valence_mean(Valence::Positive);
  d.negative_mean = valence_mean(Valence::Negative);
  return d;
}

std::vector<EmotionReading> user_readings(const std::vector<InterviewRecord>& records) {
  std::vector<EmotionReading> out;
  for (const auto& r : records) {
    for (const auto& s : r.sessions) out.insert(out.end(), s.emotion_readings.begin(), s.emotion_readings.end());
  }
  return out;
}

EmotionDistribution emotion_distribution(const std::vector<InterviewRecord>& records_with,
                                         const std::vector<InterviewRecord>& records_without) {
  const auto with = user_readings(records_with);
  const auto without = user_readings(records_without);
  if (with.empty() || without.empty()) {
    throw Error(ErrorCode::NoReadings, with.empty() ? "no readings with empathy" : "no readings without empathy");
  }
  return {distribution_of(with), distribution_of(without)};
}

// ---- reports ----------------------------------------------------------------------

namespace {

nlohmann::json condition_json(const ConditionDistribution& d) {
  nlohmann::json per = nlohmann::json::object();
  for (const auto& [e, st] : d.per_emotion) {
    per[std::string(to_string(e))] = {{"present", st.present},
                                      {"mean_present", st.mean_present},
                                      {"mean_all", st.mean_all},
                                      {"histogram", st.histogram}};
  }
  return {{"turns", d.turns}, {"positive_mean", d.positive_mean}, {"negative_mean", d.negative_mean},
          {"emotions", per}};
}

}  // namespace

nlohmann::json to_json(const MetricReport& r) {
  nlohmann::json j = nlohmann::json::object();
  j["seed"] = r.seed;
  j["counts"] = {{"gt_events", r.gt_events}, {"interview_events", r.interview_events},
                 {"correct_events", r.correct_events}};
  if (r.coverage_pct) j["coverage"] = *r.coverage_pct;
  if (r.correctness) {
    j["correctness"] = {{"precision", r.correctness->precision}, {"recall", r.correctness->recall},
                        {"f1", r.correctness->f1}};
  }
  if (!r.judge.empty()) {
    nlohmann::json judge = nlohmann::json::object();
    for (const auto& [d, c] : r.judge) {
      judge[std::string(to_string(d))] = {{"wins", c.wins}, {"losses", c.losses}, {"ties", c.ties},
                                          {"wr", c.wr()},   {"lr", c.lr()},       {"tie", c.tie()}};
    }
    j["judge"] = judge;
  }
  if (r.valid_round_pct) j["valid_rounds"] = *r.valid_round_pct;
  if (r.stats) {
    j["conversation"] = {{"sessions", r.stats->sessions},
                         {"turns_total", r.stats->turns_total},
                         {"tokens_total", r.stats->tokens_total},
                         {"tokens_per_conv_avg", r.stats->tokens_per_conv_avg},
                         {"events_total", r.stats->events_total},
                         {"event_token_usage_avg", r.stats->event_token_usage_avg}};
  }
  if (r.emotions) {
    j["emotions"] = {{"with_empathy", condition_json(r.emotions->with_empathy)},
                     {"without_empathy", condition_json(r.emotions->without_empathy)}};
  }
  return j;
}

std::string render_markdown(const MetricReport& r) {
  std::ostringstream os;
  os << "# Evaluation report\n\nSeed: " << r.seed << "\n";
  if (r.coverage_pct || r.correctness) {
    os << "\n## Interviewing quality\n\n| Metric | Value |\n|---|---|\n";
    if (r.coverage_pct) os << "| Coverage | " << fixed(*r.coverage_pct) << " |\n";
    if (r.correctness) {
      os << "| Precision | " << fixed(r.correctness->precision) << " |\n";
      os << "| Recall | " << fixed(r.correctness->recall) << " |\n";
      os << "| F1 | " << fixed(r.correctness->f1) << " |\n";
    }
    os << "\nEvents: " << r.gt_events << " ground truth, " << r.interview_events << " extracted, "
       << r.correct_events << " judged correct.\n";
  }
  if (!r.judge.empty()) {
    os << "\n## Pairwise judgments\n\n| Dimension | WR | LR | Tie | n |\n|---|---|---|---|---|\n";
    for (const auto& [d, c] : r.judge) {
      os << "| " << to_string(d) << " | " << fixed(c.wr()) << " | " << fixed(c.lr()) << " | " << fixed(c.tie())
         << " | " << c.total() << " |\n";
    }
  }
  if (r.valid_round_pct) os << "\n## Valid rounds\n\n" << fixed(*r.valid_round_pct) << "%\n";
  if (r.stats) {
    os << "\n## Conversation statistics\n\n| Statistic | Value |\n|---|---|\n";
    os << "| Sessions | " << r.stats->sessions << " |\n";
    os << "| Turns | " << r.stats->turns_total << " |\n";
    os << "| Tokens per conversation | " << fixed(r.stats->tokens_per_conv_avg) << " |\n";
    os << "| Events | " << r.stats->events_total << " |\n";
    os << "| Tokens per event | " << fixed(r.stats->event_token_usage_avg) << " |\n";
  }
  if (r.emotions) {
    os << "\n## Emotion intensity (mean over all turns)\n\n| Emotion | With empathy | Without |\n|---|---|---|\n";
    for (auto e : kAllEmotions) {
      os << "| " << to_string(e) << " | " << fixed(r.emotions->with_empathy.per_emotion.at(e).mean_all, 3) << " | "
         << fixed(r.emotions->without_empathy.per_emotion.at(e).mean_all, 3) << " |\n";
    }
  }
  return os.str();
}

MetricReport report_from_fixture(const nlohmann::json& fx) {
  MetricReport r;
  try {
    r.seed = fx.value("seed", std::uint64_t{0});
    auto read_events = [](const nlohmann::json& arr, EventSource src, const char* prefix) {
      std::vector<Event> out;
      std::size_t n = 0;
      for (const auto& item : arr) {
        Event e;
        e.id = item.value("id", std::string(prefix) + std::to_string(++n));
        e.date_raw = item.value("date", std::string{});
        e.date_key = date_key_of(e.date_raw);
        e.topic = item.value("topic", std::string{});
        e.description = item.value("description", std::string{});
        e.source = src;
        if (item.contains("session_id")) e.session_id = item["session_id"].get<std::string>();
        out.push_back(std::move(e));
      }
      return out;
    };
    if (fx.contains("e_gt") && fx.contains("e_intw")) {
      const EventSet gt{EventSetKind::GroundTruth, read_events(fx["e_gt"], EventSource::GroundTruth, "gt-")};
      const EventSet intw{EventSetKind::Interview, read_events(fx["e_intw"], EventSource::Interview, "iv-")};
      EventSet correct{EventSetKind::Correct, {}};
      for (std::size_t i = 0; i < intw.events.size(); ++i) {
        if (fx["e_intw"][i].value("correct", false)) correct.events.push_back(intw.events[i]);
      }
      r.gt_events = gt.events.size();
      r.interview_events = intw.events.size();
      r.correct_events = correct.events.size();
      r.coverage_pct = coverage(intw, gt);
      r.correctness = correctness_scores(intw, correct, gt);
    }
    if (fx.contains("verdicts")) {
      for (const auto& [name, list] : fx["verdicts"].items()) {
        const auto d = judge_dimension_from_string(name);
        if (!d) throw Error(ErrorCode::ParseError, "unknown judge dimension: " + name);
        std::vector<JudgeVerdict> vs;
        for (const auto& v : list) {
          JudgeVerdict jv;
          jv.dimension = *d;
          const auto s = v.get<std::string>();
          jv.verdict = s == "win" ? Verdict::Left : s == "loss" ? Verdict::Right : Verdict::Tie;
          if (s != "win" && s != "loss" && s != "tie") throw Error(ErrorCode::ParseError, "bad verdict: " + s);
          vs.push_back(jv);
        }
        for (const auto& [dim, counts] : win_loss_rates(vs)) r.judge[dim] = counts;
      }
    }
    if (fx.contains("rounds")) {
      const auto& rd = fx["rounds"];
      std::vector<Transcript> ts;
      for (const auto& t : rd.at("transcripts")) ts.push_back(parse_labeled_transcript(t.get<std::string>()));
      r.valid_round_pct = valid_round_stats(ts, load_round_annotations(rd));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("metrics fixture: ") + e.what());
  }
  return r;
}

}  // namespace memoir
