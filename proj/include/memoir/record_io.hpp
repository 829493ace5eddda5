#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "memoir/autobiographer.hpp"
#include "memoir/interview_engine.hpp"

namespace memoir {

nlohmann::json to_json(const ChatMessage& m);
ChatMessage message_from_json(const nlohmann::json& j);

nlohmann::json to_json(const Transcript& t);
Transcript transcript_from_json(const nlohmann::json& j);

nlohmann::json to_json(const SessionRecord& s);
SessionRecord session_from_json(const nlohmann::json& j);

nlohmann::json to_json(const InterviewRecord& r);
InterviewRecord interview_from_json(const nlohmann::json& j);

Autobiography autobiography_from_json(const nlohmann::json& j);

// Pretty-printed with sorted keys and a trailing newline; written through a
// temporary file and renamed into place.
void write_json_file(const std::filesystem::path& path, const nlohmann::json& doc);
nlohmann::json read_json_file(const std::filesystem::path& path);

InterviewRecord load_record(const std::filesystem::path& path);

// Files written by write_record_bundle, relative to its directory.
struct BundleLayout {
  static constexpr const char* kRecord = "record.json";
  static constexpr const char* kGraph = "graph.json";
  static constexpr const char* kSummaries = "summaries.json";
  static constexpr const char* kTranscripts = "transcripts.md";
  static constexpr const char* kBookJson = "book.json";
  static constexpr const char* kBookMarkdown = "book.md";
};

// record.json always; graph, summaries and readable transcripts alongside;
// book files when `book` is given. Every JSON file carries the seed and
// config snapshot.
void write_record_bundle(const std::filesystem::path& dir, const InterviewRecord& record,
                         const std::optional<Autobiography>& book = std::nullopt);

std::string render_transcripts(const InterviewRecord& record);

}  // namespace memoir
