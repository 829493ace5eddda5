#include "memoir/record_io.hpp"

#include <fstream>
#include <sstream>

#include "memoir/error.hpp"
#include "memoir/text.hpp"

namespace memoir {

namespace fs = std::filesystem;

nlohmann::json to_json(const ChatMessage& m) {
  return {{"role", std::string(to_string(m.role))}, {"text", m.text}, {"turn_index", m.turn_index}};
}

ChatMessage message_from_json(const nlohmann::json& j) {
  return {role_from_string(j.at("role").get<std::string>()), j.at("text").get<std::string>(),
          j.at("turn_index").get<int>()};
}

nlohmann::json to_json(const Transcript& t) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& m : t) out.push_back(to_json(m));
  return out;
}

Transcript transcript_from_json(const nlohmann::json& j) {
  Transcript t;
  for (const auto& m : j) t.push_back(message_from_json(m));
  return t;
}

nlohmann::json to_json(const SessionRecord& s) {
  nlohmann::json readings = nlohmann::json::array();
  for (const auto& r : s.emotion_readings) readings.push_back(to_json(r));
  nlohmann::json dynamics = nlohmann::json::array();
  for (const auto& d : s.dynamics) {
    dynamics.push_back({{"round", d.round}, {"events_extracted", d.events_extracted},
                        {"questions_extrapolated", d.questions_extrapolated}});
  }
  nlohmann::json j = {{"session_id", s.session_id},
                      {"ordinal", s.ordinal},
                      {"topic_id", s.topic_id},
                      {"system_prompt", s.system_prompt},
                      {"transcript", to_json(s.transcript)},
                      {"emotion_readings", readings},
                      {"rounds_used", s.rounds_used},
                      {"dynamics", dynamics},
                      {"extraction_warnings", s.extraction_warnings},
                      {"timed_out", s.timed_out}};
  j["summary"] = s.summary ? to_json(*s.summary) : nlohmann::json(nullptr);
  j["baseline_topic"] = s.baseline_topic ? nlohmann::json(*s.baseline_topic) : nlohmann::json(nullptr);
  return j;
}

SessionRecord session_from_json(const nlohmann::json& j) {
  SessionRecord s;
  s.session_id = j.at("session_id").get<std::string>();
  s.ordinal = j.at("ordinal").get<int>();
  s.topic_id = j.at("topic_id").get<std::string>();
  s.system_prompt = j.value("system_prompt", std::string{});
  s.transcript = transcript_from_json(j.at("transcript"));
  for (const auto& r : j.value("emotion_readings", nlohmann::json::array())) {
    s.emotion_readings.push_back(reading_from_json(r));
  }
  s.rounds_used = j.value("rounds_used", 0);
  for (const auto& d : j.value("dynamics", nlohmann::json::array())) {
    s.dynamics.push_back({d.at("round").get<int>(), d.at("events_extracted").get<int>(),
                          d.at("questions_extrapolated").get<int>()});
  }
  if (j.contains("summary") && !j["summary"].is_null()) s.summary = summary_from_json(j["summary"]);
  if (j.contains("baseline_topic") && !j["baseline_topic"].is_null()) {
    s.baseline_topic = j["baseline_topic"].get<std::string>();
  }
  s.extraction_warnings = j.value("extraction_warnings", 0);
  s.timed_out = j.value("timed_out", false);
  return s;
}

nlohmann::json to_json(const InterviewRecord& r) {
  nlohmann::json sessions = nlohmann::json::array();
  for (const auto& s : r.sessions) sessions.push_back(to_json(s));
  nlohmann::json summaries = nlohmann::json::array();
  for (const auto& s : r.summaries) summaries.push_back(to_json(s));
  nlohmann::json j = {{"interview_id", r.interview_id}, {"persona_id", r.persona_id},
                      {"seed", r.seed},                 {"config", r.config_snapshot},
                      {"sessions", sessions},           {"graph", r.graph.to_json()},
                      {"summaries", summaries},         {"complete", r.complete}};
  j["error"] = r.error ? nlohmann::json(*r.error) : nlohmann::json(nullptr);
  return j;
}

InterviewRecord interview_from_json(const nlohmann::json& j) {
  InterviewRecord r;
  try {
    r.interview_id = j.at("interview_id").get<std::string>();
    r.persona_id = j.value("persona_id", std::string{});
    r.seed = j.value("seed", std::uint64_t{0});
    r.config_snapshot = j.value("config", nlohmann::json::object());
    for (const auto& s : j.at("sessions")) r.sessions.push_back(session_from_json(s));
    if (j.contains("graph")) r.graph = MemoryGraph::from_json(j["graph"]);
    for (const auto& s : j.value("summaries", nlohmann::json::array())) r.summaries.push_back(summary_from_json(s));
    r.complete = j.value("complete", false);
    if (j.contains("error") && !j["error"].is_null()) r.error = j["error"].get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("interview record: ") + e.what());
  }
  return r;
}

Autobiography autobiography_from_json(const nlohmann::json& j) {
  Autobiography b;
  try {
    b.persona_id = j.at("persona_id").get<std::string>();
    b.front_matter = j.value("front_matter", std::map<std::string, std::string>{});
    for (const auto& c : j.at("chapters")) b.chapters.push_back(chapter_from_json(c));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("autobiography: ") + e.what());
  }
  return b;
}

void write_json_file(const fs::path& path, const nlohmann::json& doc) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + tmp.string());
    out << doc.dump(2) << "\n";
    if (!out) throw Error(ErrorCode::IoError, "write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

nlohmann::json read_json_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
}

InterviewRecord load_record(const fs::path& path) {
  return interview_from_json(read_json_file(path));
}

std::string render_transcripts(const InterviewRecord& record) {
  std::ostringstream os;
  os << "<!-- seed: " << record.seed << " config: " << record.config_snapshot.dump() << " -->\n\n";
  os << "# Transcripts: " << record.persona_id << "\n";
  for (const auto& s : record.sessions) {
    os << "\n## Session " << s.ordinal << " (" << s.topic_id << ")\n\n";
    for (const auto& m : s.transcript) {
      os << "**" << (m.role == Role::User ? "User" : "Interviewer") << ":** " << m.text << "\n\n";
    }
  }
  return os.str();
}

void write_record_bundle(const fs::path& dir, const InterviewRecord& record,
                         const std::optional<Autobiography>& book) {
  fs::create_directories(dir);
  const nlohmann::json provenance = {{"seed", record.seed}, {"config", record.config_snapshot}};

  write_json_file(dir / BundleLayout::kRecord, to_json(record));

  nlohmann::json graph = provenance;
  graph["graph"] = record.graph.to_json();
  write_json_file(dir / BundleLayout::kGraph, graph);

  nlohmann::json summaries = provenance;
  summaries["summaries"] = nlohmann::json::array();
  for (const auto& s : record.summaries) summaries["summaries"].push_back(to_json(s));
  write_json_file(dir / BundleLayout::kSummaries, summaries);

  text::write_file(dir / BundleLayout::kTranscripts, render_transcripts(record));

  if (book) {
    nlohmann::json b = provenance;
    b["book"] = to_json(*book);
    write_json_file(dir / BundleLayout::kBookJson, b);
    text::write_file(dir / BundleLayout::kBookMarkdown, export_markdown(*book));
  }
}

}  // namespace memoir
