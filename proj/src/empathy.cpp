#include "memoir/empathy.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <regex>

#include "memoir/error.hpp"
#include "memoir/text.hpp"

namespace memoir {

namespace {

constexpr std::array<std::string_view, kEmotionCount> kEmotionNames{
    "anger", "anticipation", "disgust", "fear", "joy", "love",
    "optimism", "pessimism", "sadness", "surprise", "trust"};

constexpr const char* kCategorizeTemplate =
    "Task: Categorize the text's emotional tone as either 'neutral or no emotion' or identify the presence of one "
    "or more of the given emotions (anger, anticipation, disgust, fear, joy, love, optimism, pessimism, sadness, "
    "surprise, trust).\n"
    "Text: [sentence]\n"
    "This text contains emotions:";

constexpr const char* kIntensityTemplate =
    "Task: Assign a numerical value between 0 (least E) and 1 (most E) to represent the intensity of emotion E "
    "expressed in the text.\n"
    "Text: [sentence]\n"
    "Emotion: [emotion]\n"
    "Intensity Score:";

constexpr const char* kComfortTemplate =
    "The patient has the emotion of [detected_emotions] with the intensity of [detected_intensities]. Your task "
    "is to provide comfort to users who are feeling upset. When a user's emotional state is identified as 'upset' "
    "with any level of intensity, adjust your tone and content to offer empathy, support, and understanding.";

constexpr const char* kReflectiveListening =
    "Reflective Listening:\n\n"
    "Listen Actively: Understand the underlying messages in the user's words, focusing on emotional tones and "
    "context.\n\n"
    "Reflect Content and Emotion: Summarize and rephrase key points to confirm understanding, and identify and "
    "validate the emotions expressed. Use phrases like, 'It sounds like you feel...' or 'What I'm hearing is...'";

constexpr const char* kCbt =
    "Cognitive-Behavior Therapy (CBT): Identify and Challenge Cognitive Distortions: Help users recognize patterns "
    "in their thoughts that might be unhelpful or unrealistic. For example, if a user expresses an all-or-nothing "
    "view, you might say, 'It sounds like you\xE2\x80\x99re viewing this situation in black and white. What are some "
    "shades of grey here?'";

constexpr const char* kPsychodynamic =
    "Psychodynamic Therapy: Explore Links to the Past: Gently invite users to notice how earlier experiences and "
    "relationships may shape their present feelings and choices. For example, you might ask, 'Does this remind you "
    "of anything from earlier in your life?'";

std::string format_intensity(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

bool has_word(const std::string& haystack, std::string_view word) {
  std::size_t pos = 0;
  while ((pos = haystack.find(word, pos)) != std::string::npos) {
    const bool left = pos == 0 || !std::isalpha(static_cast<unsigned char>(haystack[pos - 1]));
    const std::size_t after = pos + word.size();
    const bool right = after >= haystack.size() || !std::isalpha(static_cast<unsigned char>(haystack[after]));
    if (left && right) return true;
    pos = after;
  }
  return false;
}

}  // namespace

std::string_view to_string(Emotion e) { return kEmotionNames[static_cast<std::size_t>(e)]; }

std::optional<Emotion> emotion_from_string(std::string_view name) {
  const std::string key = text::to_lower(text::trim(name));
  for (std::size_t i = 0; i < kEmotionNames.size(); ++i) {
    if (key == kEmotionNames[i]) return kAllEmotions[i];
  }
  return std::nullopt;
}

Valence valence_of(Emotion e) {
  switch (e) {
    case Emotion::Joy:
    case Emotion::Love:
    case Emotion::Optimism:
    case Emotion::Trust:
    case Emotion::Anticipation:
      return Valence::Positive;
    case Emotion::Anger:
    case Emotion::Disgust:
    case Emotion::Fear:
    case Emotion::Pessimism:
    case Emotion::Sadness:
      return Valence::Negative;
    case Emotion::Surprise:
      break;
  }
  return Valence::Unclassified;
}

bool EmotionReading::neutral() const {
  return std::none_of(entries.begin(), entries.end(), [](const auto& e) { return e.present; });
}

nlohmann::json to_json(const EmotionReading& r) {
  nlohmann::json emotions = nlohmann::json::object();
  for (Emotion e : kAllEmotions) {
    const auto& entry = r[e];
    if (!entry.present) continue;
    emotions[std::string(to_string(e))] = entry.intensity ? nlohmann::json(*entry.intensity) : nlohmann::json(nullptr);
  }
  return {{"source_turn", r.source_turn}, {"warnings", r.warnings}, {"emotions", std::move(emotions)}};
}

EmotionReading reading_from_json(const nlohmann::json& j) {
  EmotionReading r;
  r.source_turn = j.value("source_turn", 0);
  r.warnings = j.value("warnings", 0);
  for (const auto& [name, value] : j.at("emotions").items()) {
    const auto e = emotion_from_string(name);
    if (!e) throw Error(ErrorCode::ParseError, "unknown emotion label: " + name);
    r[*e].present = true;
    if (!value.is_null()) r[*e].intensity = std::clamp(value.get<double>(), 0.0, 1.0);
  }
  return r;
}

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::ReflectiveListening: return "reflective_listening";
    case Strategy::Cbt: return "cbt";
    case Strategy::Psychodynamic: return "psychodynamic";
  }
  return "";
}

std::optional<Strategy> strategy_from_string(std::string_view name) {
  for (Strategy s : {Strategy::ReflectiveListening, Strategy::Cbt, Strategy::Psychodynamic}) {
    if (name == to_string(s)) return s;
  }
  return std::nullopt;
}

void StrategyConfig::validate() const {
  if (!(comfort_threshold >= 0.0 && comfort_threshold <= 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "comfort_threshold must lie in [0, 1]");
  }
}

std::string categorization_prompt(const std::string& utterance) {
  std::string p = kCategorizeTemplate;
  text::replace_all(p, "[sentence]", utterance);
  return p;
}

std::string intensity_prompt(const std::string& utterance, Emotion emotion) {
  std::string p = kIntensityTemplate;
  text::replace_all(p, "[emotion]", std::string(to_string(emotion)));
  text::replace_all(p, "[sentence]", utterance);
  return p;
}

GatewayDetector::GatewayDetector(std::shared_ptr<Gateway> gateway, GenerationParams params)
    : gateway_(std::move(gateway)), params_(params) {}

std::string GatewayDetector::call(const std::string& prompt, CallSite tag) {
  try {
    return gateway_->complete({{Role::User, prompt, 0}}, params_, tag);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::BackendUnreachable) throw Error(ErrorCode::DetectorUnreachable, e.what());
    throw;
  }
}

std::string GatewayDetector::categorize(const std::string& utterance) {
  return call(categorization_prompt(utterance), CallSite::Emotion);
}

std::string GatewayDetector::intensity(const std::string& utterance, Emotion emotion) {
  return call(intensity_prompt(utterance, emotion), CallSite::Intensity);
}

ScriptedDetector::ScriptedDetector(std::vector<ScriptedEmotionRule> rules) : rules_(std::move(rules)) {}

ScriptedDetector ScriptedDetector::from_map(const std::map<std::string, std::map<std::string, double>>& table) {
  std::vector<ScriptedEmotionRule> rules;
  for (const auto& [pattern, emotions] : table) {
    ScriptedEmotionRule rule;
    rule.contains = pattern;
    std::vector<std::string> names;
    for (const auto& [name, value] : emotions) {
      names.push_back(name);
      rule.intensity_replies[name] = format_intensity(value);
    }
    rule.category_reply = names.empty() ? "neutral or no emotion" : text::join(names, ", ");
    rules.push_back(std::move(rule));
  }
  // Longer patterns first so specific fixtures beat catch-alls.
  std::stable_sort(rules.begin(), rules.end(),
                   [](const auto& a, const auto& b) { return a.contains.size() > b.contains.size(); });
  return ScriptedDetector(std::move(rules));
}

ScriptedDetector ScriptedDetector::from_json(const nlohmann::json& doc) {
  std::vector<ScriptedEmotionRule> rules;
  try {
    for (const auto& r : doc.at("rules")) {
      ScriptedEmotionRule rule;
      rule.contains = r.value("contains", std::string{});
      rule.category_reply = r.at("category").get<std::string>();
      const auto intensities = r.value("intensity", nlohmann::json::object());
      for (const auto& [name, value] : intensities.items()) {
        rule.intensity_replies[name] = value.is_string() ? value.get<std::string>() : format_intensity(value.get<double>());
      }
      rules.push_back(std::move(rule));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("scripted detector: ") + e.what());
  }
  return ScriptedDetector(std::move(rules));
}

const ScriptedEmotionRule* ScriptedDetector::match(const std::string& utterance) const {
  for (const auto& r : rules_) {
    if (r.contains.empty() || utterance.find(r.contains) != std::string::npos) return &r;
  }
  return nullptr;
}

std::string ScriptedDetector::categorize(const std::string& utterance) {
  const auto* r = match(utterance);
  return r ? r->category_reply : "neutral or no emotion";
}

std::string ScriptedDetector::intensity(const std::string& utterance, Emotion emotion) {
  const auto* r = match(utterance);
  if (!r) return "0";
  auto it = r->intensity_replies.find(std::string(to_string(emotion)));
  return it == r->intensity_replies.end() ? "0" : it->second;
}

std::optional<std::vector<Emotion>> parse_categories(std::string_view reply) {
  const std::string lower = text::to_lower(reply);
  std::vector<Emotion> found;
  for (Emotion e : kAllEmotions) {
    if (has_word(lower, to_string(e))) found.push_back(e);
  }
  if (!found.empty()) return found;
  if (lower.find("neutral") != std::string::npos || lower.find("no emotion") != std::string::npos) {
    return std::vector<Emotion>{};
  }
  return std::nullopt;
}

ParsedIntensity parse_intensity(std::string_view reply) {
  static const std::regex number(R"([-+]?(\d+(\.\d*)?|\.\d+))");
  const std::string s(reply);
  std::smatch m;
  if (!std::regex_search(s, m, number)) return {std::nullopt, true};
  const double v = std::stod(m.str());
  if (v < 0.0 || v > 1.0) return {std::clamp(v, 0.0, 1.0), true};
  return {v, false};
}

EmotionReading detect_emotions(const std::string& utterance, EmotionDetector& detector, int source_turn) {
  if (text::trim(utterance).empty()) throw Error(ErrorCode::EmptyText, "cannot detect emotions in empty text");
  EmotionReading reading;
  reading.source_turn = source_turn;
  const auto labels = parse_categories(detector.categorize(utterance));
  if (!labels) {
    ++reading.warnings;
    return reading;
  }
  for (Emotion e : *labels) {
    const auto parsed = parse_intensity(detector.intensity(utterance, e));
    reading[e].present = true;
    reading[e].intensity = parsed.value;
    if (parsed.warning) ++reading.warnings;
  }
  return reading;
}

std::optional<std::string> empathy_directive(const EmotionReading& reading, const StrategyConfig& cfg) {
  std::vector<std::string> names;
  std::vector<std::string> values;
  for (Emotion e : kAllEmotions) {
    if (valence_of(e) != Valence::Negative) continue;
    const auto& entry = reading[e];
    if (!entry.present) continue;
    const double v = entry.intensity.value_or(0.0);
    if (v >= cfg.comfort_threshold) {
      names.emplace_back(to_string(e));
      values.push_back(format_intensity(v));
    }
  }
  if (!names.empty()) {
    std::string directive = kComfortTemplate;
    text::replace_all(directive, "[detected_emotions]", text::join(names, ", "));
    text::replace_all(directive, "[detected_intensities]", text::join(values, ", "));
    return directive;
  }
  if (cfg.acknowledge_non_negative && !reading.neutral()) {
    std::vector<std::string> present;
    for (Emotion e : kAllEmotions) {
      if (reading[e].present) present.emplace_back(to_string(e));
    }
    return "The user expresses " + text::join(present, ", ") +
           ". Acknowledge this feeling briefly before moving on.";
  }
  return std::nullopt;
}

std::string strategy_preamble(const StrategyConfig& cfg) {
  if (cfg.strategies.empty()) return {};
  std::vector<std::string> titles;
  std::vector<std::string> sections;
  if (cfg.strategies.contains(Strategy::ReflectiveListening)) {
    titles.emplace_back("Reflective Listening");
    sections.emplace_back(kReflectiveListening);
  }
  if (cfg.strategies.contains(Strategy::Cbt)) {
    titles.emplace_back("Cognitive-Behavior Therapy");
    sections.emplace_back(kCbt);
  }
  if (cfg.strategies.contains(Strategy::Psychodynamic)) {
    titles.emplace_back("Psychodynamic Therapy");
    sections.emplace_back(kPsychodynamic);
  }
  std::string list;
  if (titles.size() == 1) {
    list = titles[0];
  } else if (titles.size() == 2) {
    list = titles[0] + " and " + titles[1];
  } else {
    list = titles[0] + ", " + titles[1] + ", and " + titles[2];
  }
  return "Your objective is to engage with users empathetically by integrating " + list +
         " techniques. Here's how you should approach interactions:\n\n" + text::join(sections, "\n\n");
}

}  // namespace memoir
