#include "memoir/user_proxy.hpp"

#include <algorithm>
#include <cmath>

#include "memoir/error.hpp"
#include "memoir/text.hpp"

namespace memoir {

namespace {

constexpr const char* kUserSystemTemplate =
    "Here are your high-level past life experiences:\n"
    "====== summary beginning ======\n"
    "{personal_experience}\n"
    "====== summary ending ======\n"
    "The counselor is trying to reactivate and reconstruct your memory by asking questions about your past "
    "history.\n"
    "If you are not sure about the counselor's question and need to retrieve the journal to get related documents "
    "and more details, you must output the <RETRIEVE> tool-usage command, with the following format:\n"
    "<RETRIEVE> <The question you want to retrieve for>,\n"
    "e.g., <RETRIEVE> <A specific adventure or day with my friend that stands out as particularly memorable or "
    "impactful.>\n"
    "If the retrieved documents are provided, you should not output the <RETRIEVE> command.\n"
    "When the counselor asks for a specific event/moment, you should always do <RETRIEVE>.\n"
    "Make sure the conversation is natural and brief like the real conversation. Do not mention you are an AI "
    "assistant and always be like a real patient with mental health issues. Your output should be within 5 "
    "sentences.";

constexpr const char* kInstructionalTemplate =
    "Here are some related documents and materials regarding the counselor's question/response. You may use these "
    "documents to enrich your response.\n"
    "You should not output the <RETRIEVE> command. You must provide a response according to the provided "
    "documents.\n"
    "====== Document Begin ======\n"
    "{retrieved}\n"
    "====== Document End ======";

constexpr const char* kPersonaSummaryTemplate =
    "The following text is the opening of an autobiography. Write a first-person summary of the author's life "
    "experiences: the main periods of their life, the places they lived, the people who mattered to them and the "
    "events that shaped them.\n"
    "====== Text Begin ======\n"
    "{text}\n"
    "====== Text End ======\n"
    "Output your summary only:";

constexpr const char* kForcedFallback = "I'm not sure I remember that clearly.";

// Removes every "<RETRIEVE>" marker together with the bracketed query after it.
std::string strip_retrieve(std::string s) {
  std::size_t pos;
  while ((pos = s.find(kRetrieveMarker)) != std::string::npos) {
    std::size_t end = pos + std::string_view(kRetrieveMarker).size();
    std::size_t k = end;
    while (k < s.size() && std::isspace(static_cast<unsigned char>(s[k]))) ++k;
    if (k < s.size() && s[k] == '<') {
      const std::size_t close = s.find('>', k);
      end = close == std::string::npos ? s.size() : close + 1;
      if (end < s.size() && s[end] == ',') ++end;
    }
    s.erase(pos, end - pos);
  }
  return text::trim(s);
}

}  // namespace

std::size_t chunk_count(std::size_t n_tokens, const ChunkingOptions& opts) {
  if (n_tokens == 0) return 0;
  if (n_tokens <= opts.size) return 1;
  const std::size_t step = opts.size - opts.overlap;
  return (n_tokens - opts.overlap + step - 1) / step;
}

std::vector<std::string> chunk_text(std::string_view input, const ChunkingOptions& opts, const Tokenizer& tokenizer) {
  if (opts.size == 0 || opts.overlap >= opts.size) {
    throw Error(ErrorCode::InvalidConfig, "chunking needs size > overlap >= 0");
  }
  const auto spans = tokenizer.tokenize(input);
  const std::size_t n = spans.size();
  std::vector<std::string> chunks;
  const std::size_t count = chunk_count(n, opts);
  const std::size_t step = opts.size - opts.overlap;
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t first = i * step;
    const std::size_t last = std::min(first + opts.size, n) - 1;
    chunks.emplace_back(input.substr(spans[first].begin, spans[last].end - spans[first].begin));
  }
  return chunks;
}

std::string persona_summary_prompt(std::string_view excerpt) {
  std::string p = kPersonaSummaryTemplate;
  text::replace_all(p, "{text}", excerpt);
  return p;
}

nlohmann::json ProxyPersona::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < embeddings.rows(); ++r) {
    std::vector<double> row(static_cast<std::size_t>(embeddings.cols()));
    for (Eigen::Index c = 0; c < embeddings.cols(); ++c) row[static_cast<std::size_t>(c)] = embeddings(r, c);
    rows.push_back(std::move(row));
  }
  return {{"persona_id", persona_id},
          {"source_digest", source_digest},
          {"experience_summary", experience_summary},
          {"chunks", chunks},
          {"embeddings", std::move(rows)},
          {"similarity_threshold", similarity_threshold},
          {"max_retrieve_loops", max_retrieve_loops},
          {"top_k", top_k},
          {"max_sentences", max_sentences}};
}

ProxyPersona ProxyPersona::from_json(const nlohmann::json& doc) {
  ProxyPersona p;
  try {
    p.persona_id = doc.at("persona_id").get<std::string>();
    p.source_digest = doc.at("source_digest").get<std::string>();
    p.experience_summary = doc.at("experience_summary").get<std::string>();
    p.chunks = doc.at("chunks").get<std::vector<std::string>>();
    const auto rows = doc.at("embeddings").get<std::vector<std::vector<double>>>();
    const auto dim = rows.empty() ? 0 : rows.front().size();
    p.embeddings.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(dim));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r].size() != dim) throw Error(ErrorCode::ParseError, "persona embeddings have mixed dimensions");
      for (std::size_t c = 0; c < dim; ++c) {
        p.embeddings(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
      }
    }
    p.similarity_threshold = doc.at("similarity_threshold").get<double>();
    p.max_retrieve_loops = doc.at("max_retrieve_loops").get<int>();
    p.top_k = doc.at("top_k").get<std::size_t>();
    p.max_sentences = doc.value("max_sentences", std::size_t{5});
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("persona: ") + e.what());
  }
  if (p.chunks.size() != static_cast<std::size_t>(p.embeddings.rows())) {
    throw Error(ErrorCode::ParseError, "persona chunk and embedding counts differ");
  }
  return p;
}

ProxyPersona build_persona(const std::string& persona_id, std::string_view source_text, Gateway& gateway,
                           const PersonaOptions& options) {
  if (text::trim(source_text).empty()) throw Error(ErrorCode::EmptyText, "persona source text is empty");
  if (!(options.similarity_threshold >= 0.0 && options.similarity_threshold <= 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "similarity_threshold must lie in [0, 1]");
  }
  ProxyPersona p;
  p.persona_id = persona_id;
  p.source_digest = text::digest(source_text);
  p.similarity_threshold = options.similarity_threshold;
  p.max_retrieve_loops = options.max_retrieve_loops;
  p.top_k = options.top_k;
  p.max_sentences = options.max_sentences;

  p.chunks = chunk_text(source_text, options.chunking, gateway.tokenizer());
  for (std::size_t i = 0; i < p.chunks.size(); ++i) {
    const auto v = gateway.embed(p.chunks[i]);
    if (i == 0) p.embeddings.resize(static_cast<Eigen::Index>(p.chunks.size()), v.dimension());
    p.embeddings.row(static_cast<Eigen::Index>(i)) = v.values.transpose();
  }

  const std::string excerpt = truncate_tokens(source_text, options.summary_source_tokens, gateway.tokenizer());
  p.experience_summary = text::trim(gateway.complete({{Role::User, persona_summary_prompt(excerpt), 0}},
                                                     options.params, CallSite::PersonaSummary));
  if (p.experience_summary.empty()) throw Error(ErrorCode::EmptyModelReply, "empty persona summary");
  return p;
}

ProxyPersona load_or_build_persona(const std::string& persona_id, std::string_view source_text, Gateway& gateway,
                                   const PersonaOptions& options, const std::filesystem::path& cache_dir) {
  const auto path = cache_dir / (persona_id + "-" + text::digest(source_text) + ".json");
  if (std::filesystem::exists(path)) {
    try {
      auto cached = ProxyPersona::from_json(nlohmann::json::parse(text::read_file(path)));
      if (cached.source_digest == text::digest(source_text)) {
        cached.similarity_threshold = options.similarity_threshold;
        cached.max_retrieve_loops = options.max_retrieve_loops;
        cached.top_k = options.top_k;
        cached.max_sentences = options.max_sentences;
        return cached;
      }
    } catch (const std::exception&) {
      // Stale or corrupt cache entries are rebuilt below.
    }
  }
  auto persona = build_persona(persona_id, source_text, gateway, options);
  text::write_file(path, persona.to_json().dump(2));
  return persona;
}

std::optional<RetrieveCommand> parse_retrieve(std::string_view input) {
  const std::size_t marker = input.find(kRetrieveMarker);
  if (marker == std::string_view::npos) return std::nullopt;
  std::string_view rest = input.substr(marker + std::string_view(kRetrieveMarker).size());
  std::string query;
  const std::size_t open = rest.find('<');
  const std::size_t line_end = rest.find('\n');
  if (open != std::string_view::npos && (line_end == std::string_view::npos || open < line_end)) {
    const std::size_t close = rest.find('>', open + 1);
    query = std::string(rest.substr(open + 1, close == std::string_view::npos ? std::string_view::npos
                                                                              : close - open - 1));
  } else {
    query = std::string(rest.substr(0, line_end));
  }
  query = text::trim(query);
  while (!query.empty() && (query.back() == ',' || query.back() == '>')) query = text::trim(query.substr(0, query.size() - 1));
  if (query.empty()) throw Error(ErrorCode::EmptyRetrieveQuery, "<RETRIEVE> command without a query");
  return RetrieveCommand{query};
}

std::vector<RetrievedChunk> retrieve(const ProxyPersona& persona, const std::string& query, Gateway& gateway) {
  if (text::trim(query).empty()) throw Error(ErrorCode::EmptyRetrieveQuery, "empty retrieval query");
  const auto q = gateway.embed(query);
  if (persona.embeddings.rows() > 0 && q.dimension() != persona.embeddings.cols()) {
    throw Error(ErrorCode::InvalidRequest, "query embedding dimension differs from the persona's");
  }
  std::vector<RetrievedChunk> hits;
  for (Eigen::Index r = 0; r < persona.embeddings.rows(); ++r) {
    const double sim = cosine(persona.embeddings.row(r).transpose(), q.values);
    if (sim >= persona.similarity_threshold) {
      hits.push_back({static_cast<std::size_t>(r), persona.chunks[static_cast<std::size_t>(r)], sim});
    }
  }
  std::sort(hits.begin(), hits.end(), [](const auto& a, const auto& b) {
    return a.similarity != b.similarity ? a.similarity > b.similarity : a.index < b.index;
  });
  if (hits.size() > persona.top_k) hits.resize(persona.top_k);
  return hits;
}

std::string user_system_prompt(const ProxyPersona& persona) {
  std::string p = kUserSystemTemplate;
  text::replace_all(p, "{personal_experience}", persona.experience_summary);
  return p;
}

std::string user_instructional_prompt(const std::vector<RetrievedChunk>& docs) {
  std::vector<std::string> texts;
  for (const auto& d : docs) texts.push_back(d.text);
  std::string p = kInstructionalTemplate;
  text::replace_all(p, "{retrieved}", text::join(texts, "\n\n"));
  return p;
}

ProxyReply proxy_respond(const ProxyPersona& persona, const ChatMessage& interviewer, const Transcript& transcript,
                         Gateway& gateway, const GenerationParams& params, const std::string& topic_id) {
  CompletionRequest request;
  request.params = params;
  request.tag = CallSite::Proxy;
  request.topic_id = topic_id;
  request.perspective = Perspective::User;
  request.messages.push_back({Role::System, user_system_prompt(persona), 0});
  request.messages.insert(request.messages.end(), transcript.begin(), transcript.end());
  if (transcript.empty() || !(transcript.back() == interviewer)) request.messages.push_back(interviewer);

  ProxyReply out;
  std::string reply = gateway.complete(request);
  ++out.model_calls;

  auto command = [](const std::string& r) -> std::optional<RetrieveCommand> {
    try {
      return parse_retrieve(r);
    } catch (const Error&) {
      return std::nullopt;  // an empty query cannot be served; stripped below
    }
  };

  while (out.retrieve_loops < persona.max_retrieve_loops) {
    const auto cmd = command(reply);
    if (!cmd) break;
    const auto docs = retrieve(persona, cmd->query, gateway);
    const int next_index = request.messages.back().turn_index + 1;
    request.messages.push_back({Role::User, reply, next_index});
    request.messages.push_back({Role::Interviewer, user_instructional_prompt(docs), next_index + 1});
    reply = gateway.complete(request);
    ++out.model_calls;
    ++out.retrieve_loops;
  }

  if (reply.find(kRetrieveMarker) != std::string::npos) {
    reply = strip_retrieve(reply);
    out.forced_direct = true;
  }
  reply = text::trim(reply);
  if (reply.empty()) {
    reply = kForcedFallback;
    out.forced_direct = true;
  }
  const auto capped = text::trim_sentences(reply, persona.max_sentences);
  out.sentence_trimmed = capped.trimmed;
  out.message = {Role::User, capped.text, interviewer.turn_index + 1};
  return out;
}

ProxyChannel::ProxyChannel(std::shared_ptr<const ProxyPersona> persona, std::shared_ptr<Gateway> gateway,
                           GenerationParams params)
    : persona_(std::move(persona)), gateway_(std::move(gateway)), params_(params) {}

std::optional<std::string> ProxyChannel::respond(const ChatMessage& interviewer, const Transcript& transcript,
                                                 const std::string& topic_id) {
  auto reply = proxy_respond(*persona_, interviewer, transcript, *gateway_, params_, topic_id);
  calls_ += reply.model_calls;
  return reply.message.text;
}

}  // namespace memoir
