#include "memoir/autobiographer.hpp"

#include <algorithm>

#include "memoir/error.hpp"
#include "memoir/text.hpp"

namespace memoir {

namespace {

constexpr const char* kQualities =
    "When generating this chapter, you should make sure it is:\n"
    "Insightful: Involving a deep, self-reflective exploration of past experiences, with a profound understanding "
    "of motives, actions, and impacts.\n"
    "Narrative: A compelling, logical, and well-articulated life story, blending memorable anecdotes, vivid "
    "descriptions, and insightful reflections\n"
    "Emotional Impact: Engaging the reader by stirring feelings, evoking empathy, and stirring responses through "
    "the author's personal triumphs, challenges, and experiences.\n\n"
    "You should summarize all this information and finish this chapter";

constexpr const char* kGuidedHead =
    "You are tasked with generating one chapter of an autobiography for a user. You are providing the following "
    "components to finish this chapter:\n"
    "1. A guidance of this chapter\n"
    "- The chapter should be finished by following this guidance\n"
    "2. A conversation dialog between the user and the interviewer\n"
    "- Tone and Preference: The chapter will simulate the user's tone and preference, leveraging the user's oral "
    "habits.\n"
    "- Content and Details: The chapter will include the contents and details that appeared in this "
    "conversation.\n"
    "3. A list of memory nodes that happened during this chapter\n"
    "- Events: The chapter should include all the events listed in the memory nodes\n\n"
    "Now, I will provide you with the three contents.\n"
    "================ Chapter Guidance Beginning ================\n"
    "{chapter_guidance}\n"
    "================ Chapter Guidance Ending ================\n"
    "================ Conversation Beginning ================\n"
    "{conversation}\n"
    "================ Conversation Ending ================\n"
    "================ Memory Nodes Beginning ================\n"
    "{memory_nodes}\n"
    "================ Memory Nodes Ending ================\n\n";

constexpr const char* kBaselineHead =
    "You are tasked with generating one chapter of an autobiography for a user. You are providing the following "
    "components to finish this chapter:\n"
    "1. A conversation dialog between the user and the interviewer\n"
    "- Tone and Preference: The chapter will simulate the interviewer's tone and preference, leveraging the "
    "interviewer's oral habits.\n"
    "- Content and Details: The chapter will include the contents and details that appeared in this "
    "conversation.\n\n"
    "Now, I will provide you with the three contents.\n"
    "================ Conversation Beginning ================\n"
    "{conversation}\n"
    "================ Conversation Ending ================\n\n";

bool looks_like_heading(const std::string& line) {
  if (line.empty()) return false;
  if (line.front() == '#') return true;
  if (text::starts_with_ci(line, "chapter ")) return true;
  const auto words = text::split(line, ' ');
  const char last = line.back();
  return words.size() <= 10 && last != '.' && last != '!' && last != '?' && last != '"' && last != ',';
}

std::string strip_heading_marks(std::string line) {
  while (!line.empty() && (line.front() == '#' || line.front() == '*' || line.front() == ' ')) line.erase(line.begin());
  while (!line.empty() && (line.back() == '*' || line.back() == ' ')) line.pop_back();
  return line;
}

}  // namespace

nlohmann::json to_json(const Chapter& c) {
  return {{"ordinal", c.ordinal}, {"topic_id", c.topic_id},         {"title", c.title},
          {"body", c.body},       {"inputs_digest", c.inputs_digest}, {"used_summary", c.used_summary}};
}

Chapter chapter_from_json(const nlohmann::json& j) {
  Chapter c;
  c.ordinal = j.at("ordinal").get<int>();
  c.topic_id = j.at("topic_id").get<std::string>();
  c.title = j.at("title").get<std::string>();
  c.body = j.at("body").get<std::string>();
  c.inputs_digest = j.at("inputs_digest").get<std::string>();
  c.used_summary = j.value("used_summary", false);
  return c;
}

std::string format_memory_nodes(const std::vector<const MemoryNode*>& nodes) {
  std::vector<std::string> lines;
  int i = 1;
  for (const auto* n : nodes) lines.push_back(std::to_string(i++) + ". " + format_event_line(n->event));
  return text::join(lines, "\n");
}

std::string guided_chapter_prompt(const std::string& guidance, const std::string& conversation,
                                  const std::string& memory_nodes) {
  std::string p = kGuidedHead;
  // Conversation last: user text may itself contain brace placeholders.
  text::replace_all(p, "{chapter_guidance}", guidance);
  text::replace_all(p, "{memory_nodes}", memory_nodes);
  text::replace_all(p, "{conversation}", conversation);
  return p + kQualities;
}

std::string baseline_chapter_prompt(const std::string& conversation) {
  std::string p = kBaselineHead;
  text::replace_all(p, "{conversation}", conversation);
  return p + kQualities;
}

std::string chapter_title(std::string_view body, const std::string& fallback) {
  const auto lines = text::split_lines(body);
  std::size_t i = 0;
  while (i < lines.size() && text::trim(lines[i]).empty()) ++i;
  if (i >= lines.size() || i + 1 >= lines.size()) return fallback;
  const std::string first = text::trim(lines[i]);
  if (!looks_like_heading(first)) return fallback;
  std::string title = strip_heading_marks(first);
  return title.empty() ? fallback : title;
}

Chapter generate_chapter(const SessionRecord& record, const std::vector<const MemoryNode*>& nodes,
                         const std::string& guidance, EngineMode mode, Gateway& gateway,
                         const ChapterOptions& options) {
  if (record.transcript.empty()) throw Error(ErrorCode::InvalidRequest, "session transcript is empty");

  Chapter c;
  c.ordinal = record.ordinal;
  c.topic_id = record.topic_id;

  std::string conversation = format_transcript(record.transcript);
  if (count_tokens(conversation, gateway.tokenizer()) > options.transcript_token_budget && record.summary) {
    conversation = record.summary->text;
    c.used_summary = true;
  }

  const std::string node_text = format_memory_nodes(nodes);
  const std::string prompt = mode == EngineMode::Guided ? guided_chapter_prompt(guidance, conversation, node_text)
                                                        : baseline_chapter_prompt(conversation);
  const std::string body = text::trim(
      gateway.complete({{Role::User, prompt, 0}}, options.params, CallSite::Chapter, record.topic_id));
  if (body.empty()) throw Error(ErrorCode::EmptyModelReply, "empty chapter for " + record.topic_id);

  const std::string fallback = options.fallback_title.empty() ? record.topic_id : options.fallback_title;
  c.title = chapter_title(body, fallback);
  c.body = body;
  if (c.title != fallback) {
    // Drop the heading line; the exporter writes its own.
    const auto nl = body.find('\n');
    const std::string rest = text::trim(body.substr(nl + 1));
    if (!rest.empty()) c.body = rest;
  }

  std::vector<std::string> ids;
  for (const auto* n : nodes) ids.push_back(n->event.id);
  c.inputs_digest = text::digest(std::string(to_string(mode)) + "\x1f" + guidance + "\x1f" + conversation + "\x1f" +
                                 text::join(ids, ","));
  return c;
}

Autobiography assemble_autobiography(std::vector<Chapter> chapters, const std::string& persona_id,
                                     std::map<std::string, std::string> front_matter) {
  std::sort(chapters.begin(), chapters.end(), [](const auto& a, const auto& b) { return a.ordinal < b.ordinal; });
  for (std::size_t i = 0; i < chapters.size(); ++i) {
    if (chapters[i].ordinal != static_cast<int>(i) + 1) {
      throw Error(ErrorCode::GapInOrdinals, "expected chapter " + std::to_string(i + 1) + ", found " +
                                                std::to_string(chapters[i].ordinal));
    }
  }
  Autobiography book;
  book.persona_id = persona_id;
  book.chapters = std::move(chapters);
  book.front_matter = std::move(front_matter);
  book.front_matter["persona"] = persona_id;
  book.front_matter["chapters"] = std::to_string(book.chapters.size());
  return book;
}

std::string export_markdown(const Autobiography& book) {
  std::string out = "---\n";
  for (const auto& [k, v] : book.front_matter) out += k + ": " + v + "\n";
  out += "---\n\n";
  auto title = book.front_matter.find("title");
  out += "# " + (title != book.front_matter.end() ? title->second : "Autobiography of " + book.persona_id) + "\n\n";
  out += "## Contents\n\n";
  for (const auto& c : book.chapters) {
    out += std::to_string(c.ordinal) + ". [" + c.title + "](#chapter-" + std::to_string(c.ordinal) + ")\n";
  }
  for (const auto& c : book.chapters) {
    out += "\n<a id=\"chapter-" + std::to_string(c.ordinal) + "\"></a>\n\n";
    out += "## Chapter " + std::to_string(c.ordinal) + ": " + c.title + "\n\n";
    out += c.body + "\n";
  }
  return out;
}

nlohmann::json to_json(const Autobiography& book) {
  nlohmann::json chapters = nlohmann::json::array();
  for (const auto& c : book.chapters) chapters.push_back(to_json(c));
  return {{"persona_id", book.persona_id}, {"front_matter", book.front_matter}, {"chapters", std::move(chapters)}};
}

Autobiography write_book(const InterviewRecord& record, const InterviewProtocol& protocol, EngineMode mode,
                         Gateway& gateway, const ChapterOptions& options) {
  std::vector<Chapter> chapters;
  for (const auto& session : record.sessions) {
    if (session.transcript.empty()) continue;
    const Topic& topic = protocol.at(session.topic_id);
    std::vector<const MemoryNode*> nodes;
    if (mode == EngineMode::Guided) nodes = record.graph.nodes_for_session(session.session_id);
    ChapterOptions per = options;
    per.fallback_title = topic.name;
    chapters.push_back(generate_chapter(session, nodes, topic.guidance, mode, gateway, per));
  }
  return assemble_autobiography(std::move(chapters), record.persona_id,
                                {{"interview_id", record.interview_id}, {"mode", std::string(to_string(mode))},
                                 {"seed", std::to_string(record.seed)}});
}

}  // namespace memoir
