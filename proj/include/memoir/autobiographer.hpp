#pragma once

#include <nlohmann/json.hpp>

#include <map>
#include <string>
#include <vector>

#include "memoir/interview_engine.hpp"
#include "memoir/llm_gateway.hpp"
#include "memoir/memory_graph.hpp"

namespace memoir {

struct Chapter {
  int ordinal = 0;
  std::string topic_id;
  std::string title;
  std::string body;
  std::string inputs_digest;
  bool used_summary = false;  // transcript exceeded the token budget

  bool operator==(const Chapter&) const = default;
};

nlohmann::json to_json(const Chapter& c);
Chapter chapter_from_json(const nlohmann::json& j);

struct ChapterOptions {
  GenerationParams params;
  std::size_t transcript_token_budget = 12000;
  std::string fallback_title;  // used when the body has no heading line
};

std::string format_memory_nodes(const std::vector<const MemoryNode*>& nodes);

std::string guided_chapter_prompt(const std::string& guidance, const std::string& conversation,
                                  const std::string& memory_nodes);
std::string baseline_chapter_prompt(const std::string& conversation);

// Heading-like first line ("# Title", "Chapter 3: Title", short line without a
// final period) or the fallback.
std::string chapter_title(std::string_view body, const std::string& fallback);

Chapter generate_chapter(const SessionRecord& record, const std::vector<const MemoryNode*>& nodes,
                         const std::string& guidance, EngineMode mode, Gateway& gateway,
                         const ChapterOptions& options);

struct Autobiography {
  std::string persona_id;
  std::vector<Chapter> chapters;
  std::map<std::string, std::string> front_matter;
};

// Throws GapInOrdinals unless ordinals are 1..n after sorting.
Autobiography assemble_autobiography(std::vector<Chapter> chapters, const std::string& persona_id,
                                     std::map<std::string, std::string> front_matter = {});

// Markdown: metadata block, table of contents, then one section per chapter.
std::string export_markdown(const Autobiography& book);

nlohmann::json to_json(const Autobiography& book);

// Every session of `record` as a chapter, in session order.
Autobiography write_book(const InterviewRecord& record, const InterviewProtocol& protocol, EngineMode mode,
                         Gateway& gateway, const ChapterOptions& options = {});

}  // namespace memoir
