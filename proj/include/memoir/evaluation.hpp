#pragma once

#include <nlohmann/json.hpp>

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "memoir/empathy.hpp"
#include "memoir/interview_engine.hpp"
#include "memoir/llm_gateway.hpp"
#include "memoir/memory_graph.hpp"

namespace memoir {

enum class EventSetKind { Interview, GroundTruth, Correct };

struct EventSet {
  EventSetKind kind = EventSetKind::Interview;
  std::vector<Event> events;
};

// ---- ground truth ----------------------------------------------------------

std::vector<std::string> split_paragraphs(std::string_view text);
std::string ground_truth_prompt(std::string_view paragraph);

// One event per distinct date key; paragraphs sharing a key are merged.
EventSet extract_ground_truth(std::string_view book_text, Gateway& gateway, const GenerationParams& params = {});

// ---- coverage and correctness ----------------------------------------------

// Percentage of E_GT events whose date key is matched by at least one
// E_intw event.
double coverage(const EventSet& e_intw, const EventSet& e_gt);

std::string relevance_prompt(const Event& event, const std::vector<std::string>& user_responses);

// Reads the bit after "#thescore:"; throws UnparseableScore.
int parse_score(std::string_view reply);

int judge_event_correct(const Event& event, const std::vector<std::string>& user_responses, Gateway& judge,
                        const GenerationParams& params = {});

// Judges every E_intw event against the user turns of its session.
EventSet select_correct(const EventSet& e_intw, const std::vector<SessionRecord>& sessions, Gateway& judge,
                        const GenerationParams& params = {});

struct CorrectnessScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

CorrectnessScores correctness_scores(const EventSet& e_intw, const EventSet& e_correct, const EventSet& e_gt);

// Events extracted from whole session transcripts (baseline E_intw).
EventSet posthoc_events(const std::vector<SessionRecord>& sessions, Gateway& gateway,
                        const GenerationParams& params = {});

// Graph nodes for guided records, post-hoc extraction otherwise.
EventSet interview_events(const InterviewRecord& record, EngineMode mode, Gateway& gateway,
                          const GenerationParams& params = {});

// ---- pairwise judging -------------------------------------------------------

enum class JudgeDimension { Fluency, Identification, Comforting, Insightfulness, Narrativity, EmotionalImpact };
inline constexpr std::array<JudgeDimension, 6> kAllDimensions{
    JudgeDimension::Fluency,        JudgeDimension::Identification, JudgeDimension::Comforting,
    JudgeDimension::Insightfulness, JudgeDimension::Narrativity,    JudgeDimension::EmotionalImpact};

std::string_view to_string(JudgeDimension d);
std::optional<JudgeDimension> judge_dimension_from_string(std::string_view name);

enum class Verdict { Left, Right, Tie };
std::string_view to_string(Verdict v);

struct JudgeItem {
  std::string id;
  std::string text;
};

struct JudgeVerdict {
  JudgeDimension dimension = JudgeDimension::Fluency;
  std::pair<std::string, std::string> presented_order;  // (shown as A, shown as B)
  bool swapped = false;
  Verdict verdict = Verdict::Tie;
  std::string explanation;
  std::uint64_t seed = 0;
};

std::string judge_prompt(JudgeDimension dimension, const std::string& shown_a, const std::string& shown_b);

// Swap decision for a seed: lowest bit of the first mt19937_64 output.
bool swap_for_seed(std::uint64_t seed);

// 'A', 'B' or 'C' from the last verdict token; throws UnparseableVerdict.
char parse_verdict_token(std::string_view reply);

JudgeVerdict pairwise_judge(const JudgeItem& left, const JudgeItem& right, JudgeDimension dimension, Gateway& judge,
                            std::uint64_t rng_seed, const GenerationParams& params = {});

struct RateCounts {
  std::size_t wins = 0;
  std::size_t losses = 0;
  std::size_t ties = 0;

  std::size_t total() const { return wins + losses + ties; }
  double wr() const;
  double lr() const;
  double tie() const;
};

// Tallies per dimension from our side's point of view.
std::map<JudgeDimension, RateCounts> win_loss_rates(const std::vector<JudgeVerdict>& verdicts,
                                                    Verdict ours = Verdict::Left);

// Each of ours is compared with a seeded uniformly random opponent.
std::vector<JudgeVerdict> judge_against_random_opponents(const std::vector<JudgeItem>& ours,
                                                         const std::vector<JudgeItem>& theirs,
                                                         JudgeDimension dimension, Gateway& judge,
                                                         std::uint64_t seed, const GenerationParams& params = {});

// ---- valid rounds -------------------------------------------------------------

struct RoundMark {
  std::size_t transcript = 0;
  int round = 0;  // 1-based interviewer turn within the transcript

  auto operator<=>(const RoundMark&) const = default;
};

int count_rounds(const Transcript& transcript);

// (total - invalid) / total * 100, one round per interviewer turn.
double valid_round_stats(const std::vector<Transcript>& transcripts, const std::vector<RoundMark>& invalid);

// Flags interviewer turns whose word-set Jaccard similarity to an earlier
// interviewer turn of the same transcript exceeds `threshold`.
std::vector<RoundMark> repetition_marks(const std::vector<Transcript>& transcripts, double threshold = 0.5);

// {"annotations": [{"transcript": 0, "invalid_rounds": [3, 4]}]}
std::vector<RoundMark> load_round_annotations(const nlohmann::json& doc);

// "Chatbot:"/"Interviewer:" and "User:" prefixed paragraphs.
Transcript parse_labeled_transcript(std::string_view text);

// ---- conversation statistics ----------------------------------------------------

struct ConversationStats {
  std::size_t sessions = 0;
  std::size_t turns_total = 0;
  std::size_t tokens_total = 0;
  double tokens_per_conv_avg = 0.0;
  std::size_t events_total = 0;
  double event_token_usage_avg = 0.0;
};

// `event_counts` overrides the per-record graph size (post-hoc counts for baselines).
ConversationStats conversation_stats(const std::vector<InterviewRecord>& records, const Tokenizer& tokenizer,
                                     const std::optional<std::vector<std::size_t>>& event_counts = std::nullopt);

// ---- emotion distribution ---------------------------------------------------------

struct EmotionStats {
  std::size_t turns = 0;
  std::size_t present = 0;
  double mean_present = 0.0;  // over turns where the emotion is present
  double mean_all = 0.0;      // over all turns, absent counts as 0
  std::array<std::size_t, 10> histogram{};
};

struct ConditionDistribution {
  std::size_t turns = 0;
  std::map<Emotion, EmotionStats> per_emotion;
  double positive_mean = 0.0;  // average of mean_all over the positive set
  double negative_mean = 0.0;
};

struct EmotionDistribution {
  ConditionDistribution with_empathy;
  ConditionDistribution without_empathy;
};

ConditionDistribution distribution_of(const std::vector<EmotionReading>& readings);
std::vector<EmotionReading> user_readings(const std::vector<InterviewRecord>& records);

// Throws NoReadings when either condition has no readings.
EmotionDistribution emotion_distribution(const std::vector<InterviewRecord>& records_with,
                                         const std::vector<InterviewRecord>& records_without);

// ---- reports ----------------------------------------------------------------------

struct MetricReport {
  std::optional<double> coverage_pct;
  std::optional<CorrectnessScores> correctness;
  std::size_t gt_events = 0;
  std::size_t interview_events = 0;
  std::size_t correct_events = 0;
  std::map<JudgeDimension, RateCounts> judge;
  std::optional<double> valid_round_pct;
  std::optional<ConversationStats> stats;
  std::optional<EmotionDistribution> emotions;
  std::uint64_t seed = 0;
};

nlohmann::json to_json(const MetricReport& report);
std::string render_markdown(const MetricReport& report);

// Metrics computed from a hand-authored fixture document (no model calls).
MetricReport report_from_fixture(const nlohmann::json& fixture);

}  // namespace memoir
