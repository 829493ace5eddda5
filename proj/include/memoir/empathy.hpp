#pragma once

#include <nlohmann/json.hpp>

#include <array>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "memoir/llm_gateway.hpp"

namespace memoir {

enum class Emotion {
  Anger,
  Anticipation,
  Disgust,
  Fear,
  Joy,
  Love,
  Optimism,
  Pessimism,
  Sadness,
  Surprise,
  Trust,
};

inline constexpr std::size_t kEmotionCount = 11;
inline constexpr std::array<Emotion, kEmotionCount> kAllEmotions{
    Emotion::Anger,    Emotion::Anticipation, Emotion::Disgust,  Emotion::Fear,
    Emotion::Joy,      Emotion::Love,         Emotion::Optimism, Emotion::Pessimism,
    Emotion::Sadness,  Emotion::Surprise,     Emotion::Trust};

std::string_view to_string(Emotion e);
std::optional<Emotion> emotion_from_string(std::string_view name);  // case-insensitive

enum class Valence { Positive, Negative, Unclassified };
Valence valence_of(Emotion e);

struct EmotionEntry {
  bool present = false;
  std::optional<double> intensity;

  bool operator==(const EmotionEntry&) const = default;
};

struct EmotionReading {
  std::array<EmotionEntry, kEmotionCount> entries{};
  int source_turn = 0;
  int warnings = 0;

  EmotionEntry& operator[](Emotion e) { return entries[static_cast<std::size_t>(e)]; }
  const EmotionEntry& operator[](Emotion e) const { return entries[static_cast<std::size_t>(e)]; }

  bool neutral() const;
  bool operator==(const EmotionReading&) const = default;
};

nlohmann::json to_json(const EmotionReading& r);
EmotionReading reading_from_json(const nlohmann::json& j);

enum class Strategy { ReflectiveListening, Cbt, Psychodynamic };
std::string_view to_string(Strategy s);
std::optional<Strategy> strategy_from_string(std::string_view name);

struct StrategyConfig {
  std::set<Strategy> strategies{Strategy::ReflectiveListening, Strategy::Cbt, Strategy::Psychodynamic};
  double comfort_threshold = 0.5;
  bool acknowledge_non_negative = false;

  void validate() const;  // throws InvalidConfig
};

// Raw-text detector: answers the categorization and intensity prompts.
class EmotionDetector {
 public:
  virtual ~EmotionDetector() = default;
  virtual std::string categorize(const std::string& utterance) = 0;
  virtual std::string intensity(const std::string& utterance, Emotion emotion) = 0;
};

std::string categorization_prompt(const std::string& utterance);
std::string intensity_prompt(const std::string& utterance, Emotion emotion);

// Sends the prompts through a gateway (EmoLlama-compatible endpoint or mock).
class GatewayDetector final : public EmotionDetector {
 public:
  explicit GatewayDetector(std::shared_ptr<Gateway> gateway, GenerationParams params = {16, 1, {}});

  std::string categorize(const std::string& utterance) override;
  std::string intensity(const std::string& utterance, Emotion emotion) override;

 private:
  std::string call(const std::string& prompt, CallSite tag);

  std::shared_ptr<Gateway> gateway_;
  GenerationParams params_;
};

// Fixture detector: the first rule whose pattern occurs in the utterance wins.
struct ScriptedEmotionRule {
  std::string contains;  // empty matches everything
  std::string category_reply;
  std::map<std::string, std::string> intensity_replies;  // emotion name -> raw reply
};

class ScriptedDetector final : public EmotionDetector {
 public:
  explicit ScriptedDetector(std::vector<ScriptedEmotionRule> rules);

  // Convenience: `utterance` substring -> {emotion: intensity}.
  static ScriptedDetector from_map(const std::map<std::string, std::map<std::string, double>>& table);
  static ScriptedDetector from_json(const nlohmann::json& doc);

  std::string categorize(const std::string& utterance) override;
  std::string intensity(const std::string& utterance, Emotion emotion) override;

 private:
  const ScriptedEmotionRule* match(const std::string& utterance) const;

  std::vector<ScriptedEmotionRule> rules_;
};

// Labels named in a categorization reply; nullopt when the reply is neither
// neutral nor names any known label.
std::optional<std::vector<Emotion>> parse_categories(std::string_view reply);

struct ParsedIntensity {
  std::optional<double> value;
  bool warning = false;
};
ParsedIntensity parse_intensity(std::string_view reply);

EmotionReading detect_emotions(const std::string& utterance, EmotionDetector& detector, int source_turn = 0);

std::optional<std::string> empathy_directive(const EmotionReading& reading, const StrategyConfig& cfg);
std::string strategy_preamble(const StrategyConfig& cfg);

}  // namespace memoir
