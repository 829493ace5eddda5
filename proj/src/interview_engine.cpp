#include "memoir/interview_engine.hpp"

#include <cstdio>
#include <istream>
#include <ostream>

#include "memoir/error.hpp"
#include "memoir/text.hpp"

namespace memoir {

std::string_view to_string(EngineMode mode) { return mode == EngineMode::Guided ? "guided" : "baseline"; }

std::optional<EngineMode> engine_mode_from_string(std::string_view name) {
  if (name == "guided") return EngineMode::Guided;
  if (name == "baseline") return EngineMode::Baseline;
  return std::nullopt;
}

void EngineConfig::validate(std::size_t protocol_size) const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw Error(ErrorCode::InvalidConfig, "engine." + field + ": " + why);
  };
  if (round_limit < 1) fail("round_limit", "must be at least 1");
  if (session_limit < 1) fail("session_limit", "must be at least 1");
  if (protocol_size > 0 && static_cast<std::size_t>(session_limit) > protocol_size) {
    fail("session_limit", "exceeds the protocol's " + std::to_string(protocol_size) + " topics");
  }
  if (extrapolation_period < 1) fail("extrapolation_period", "must be at least 1");
  if (extraction_window < 1) fail("extraction_window", "must be at least 1");
  if (summary_token_cap < 1) fail("summary_token_cap", "must be at least 1");
  if (params.max_new_tokens < 1) fail("max_new_tokens", "must be at least 1");
  if (session_time_budget && session_time_budget->count() < 0) fail("session_time_budget_ms", "must be >= 0");
  try {
    strategy.validate();
  } catch (const Error&) {
    fail("comfort_threshold", "must lie in [0, 1]");
  }
}

std::optional<std::string> ScriptedChannel::respond(const ChatMessage&, const Transcript&, const std::string&) {
  if (next_ >= replies_.size()) return std::nullopt;
  return replies_[next_++];
}

std::optional<std::string> TerminalChannel::respond(const ChatMessage& interviewer, const Transcript&,
                                                    const std::string&) {
  out_ << "\nInterviewer: " << interviewer.text << "\nYou: " << std::flush;
  std::string line;
  if (!std::getline(in_, line)) return std::nullopt;
  line = text::trim(line);
  if (line == "/quit" || line.empty()) return std::nullopt;
  return line;
}

std::string compose_instruction(SessionState& state, MemoryGraph& graph, const EmotionReading* reading,
                                const EngineConfig& cfg) {
  std::vector<std::string> parts;
  if (cfg.empathy_enabled && reading) {
    if (auto directive = empathy_directive(*reading, cfg.strategy)) parts.push_back(std::move(*directive));
  }

  const auto& seeds = state.topic->seed_questions;
  const bool seeds_left = state.next_seed < seeds.size();
  const bool cache_ready = cfg.memory_enabled && graph.unasked_count() > 0 &&
                           (state.last_slot == QuestionSlot::Seed || !seeds_left);
  if (cache_ready) {
    const auto q = graph.pop_question();
    parts.push_back(std::string(kAskPrefix) + q->text);
    state.last_slot = QuestionSlot::Cached;
  } else if (seeds_left) {
    parts.push_back(std::string(kAskPrefix) + seeds[state.next_seed++]);
    state.last_slot = QuestionSlot::Seed;
  } else {
    parts.emplace_back(kFollowUpDirective);
    state.last_slot = QuestionSlot::FollowUp;
  }
  state.last_instruction = text::join(parts, "\n\n");
  return state.last_instruction;
}

namespace {

std::string complete_nonempty(Gateway& gateway, const CompletionRequest& request) {
  for (int attempt = 0; attempt < 2; ++attempt) {
    std::string reply = text::trim(gateway.complete(request));
    if (!reply.empty()) return reply;
  }
  throw Error(ErrorCode::EmptyModelReply, "model returned an empty interviewer turn twice");
}

ChatMessage generate_turn(const SessionState& state, const std::optional<std::string>& instruction,
                          const EngineConfig& cfg, Gateway& gateway) {
  CompletionRequest request;
  request.messages.push_back({Role::System, state.system_prompt, 0});
  request.messages.insert(request.messages.end(), state.transcript.begin(), state.transcript.end());
  if (instruction) {
    request.messages.push_back({Role::User, *instruction, static_cast<int>(state.transcript.size())});
  }
  request.params = cfg.params;
  request.tag = CallSite::Reply;
  request.topic_id = state.topic->id;
  request.perspective = Perspective::Interviewer;
  return {Role::Interviewer, complete_nonempty(gateway, request), static_cast<int>(state.transcript.size())};
}

}  // namespace

ChatMessage compose_turn(SessionState& state, MemoryGraph& graph, const EmotionReading* reading,
                         const EngineConfig& cfg, Gateway& gateway) {
  return generate_turn(state, compose_instruction(state, graph, reading, cfg), cfg, gateway);
}

std::string baseline_system_prompt(const std::optional<std::string>& resumed_context, const std::string& topic) {
  std::string prompt = kInterviewerRole;
  if (resumed_context && !resumed_context->empty()) prompt += "\n\n" + *resumed_context;
  prompt += "\n\nIn this talk, you should discuss the topic: " + topic;
  return prompt;
}

std::string parse_topic_line(std::string_view reply) {
  std::string line;
  for (const auto& l : text::split_lines(reply)) {
    line = text::trim(l);
    if (!line.empty()) break;
  }
  while (!line.empty() && (line.back() == ':' || line.back() == '>' || line.back() == ' ')) line.pop_back();
  while (!line.empty() && (line.front() == '<' || line.front() == ' ')) line.erase(line.begin());
  if (text::starts_with_ci(line, "topic:")) line = text::trim(line.substr(6));
  return line;
}

std::string session_id_for(int ordinal) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "session-%02d", ordinal);
  return buf;
}

SessionInputs plan_session(const EngineConfig& cfg, const InterviewProtocol& protocol, const std::string& topic_id,
                           int ordinal, const std::optional<SessionSummary>& prior, Gateway& gateway) {
  SessionInputs inputs;
  inputs.prior = prior;
  inputs.plan.topic_id = topic_id;
  inputs.plan.ordinal = ordinal;
  const auto resumed = resume_context(prior);
  if (cfg.mode == EngineMode::Guided) {
    std::optional<std::string> preamble;
    if (cfg.empathy_enabled) {
      std::string p = strategy_preamble(cfg.strategy);
      if (!p.empty()) preamble = std::move(p);
    }
    inputs.plan.system_prompt = session_system_prompt(protocol, topic_id, resumed, preamble);
    return inputs;
  }

  std::string head = kInterviewerRole;
  if (resumed) head += "\n\n" + *resumed;
  CompletionRequest request;
  request.messages = {{Role::System, head, 0}, {Role::User, kTopicPrompt, 0}};
  request.params = cfg.params;
  request.tag = CallSite::Topic;
  request.topic_id = topic_id;
  std::string topic = parse_topic_line(gateway.complete(request));
  if (topic.empty()) topic = protocol.at(topic_id).name;
  inputs.baseline_topic = topic;
  inputs.plan.system_prompt = baseline_system_prompt(resumed, topic);
  return inputs;
}

SessionRecord run_session(const EngineConfig& cfg, const InterviewProtocol& protocol, const SessionInputs& inputs,
                          UserChannel& channel, const EngineDeps& deps, MemoryGraph& graph) {
  Gateway& gateway = *deps.gateway;
  const bool guided = cfg.mode == EngineMode::Guided;
  const auto started = std::chrono::steady_clock::now();

  SessionRecord record;
  record.ordinal = inputs.plan.ordinal;
  record.session_id = session_id_for(record.ordinal);
  record.topic_id = inputs.plan.topic_id;
  record.system_prompt = inputs.plan.system_prompt;
  record.baseline_topic = inputs.baseline_topic;

  SessionState state;
  state.topic = &protocol.at(record.topic_id);
  state.system_prompt = record.system_prompt;

  if (deps.observer) deps.observer->on_session_start(record.ordinal, record.topic_id, graph);

  std::optional<EmotionReading> latest_reading;
  for (int round = 1; round <= cfg.round_limit; ++round) {
    if (cfg.session_time_budget && std::chrono::steady_clock::now() - started >= *cfg.session_time_budget) {
      record.timed_out = true;
      break;
    }

    ChatMessage question;
    if (guided) {
      question = compose_turn(state, graph, latest_reading ? &*latest_reading : nullptr, cfg, gateway);
    } else {
      std::optional<std::string> opening;
      if (state.transcript.empty()) opening = kBaselineOpening;
      question = generate_turn(state, opening, cfg, gateway);
    }
    state.transcript.push_back(question);
    record.transcript = state.transcript;
    if (deps.observer) deps.observer->on_interviewer_turn(record, question);

    const auto answer = channel.respond(question, state.transcript, record.topic_id);
    if (!answer || text::trim(*answer).empty()) break;

    ChatMessage user{Role::User, *answer, static_cast<int>(state.transcript.size())};
    state.transcript.push_back(user);
    record.transcript = state.transcript;
    record.rounds_used = round;
    if (deps.observer) deps.observer->on_user_turn(record, user);

    if (!guided) continue;

    if (deps.detector) {
      latest_reading = detect_emotions(user.text, *deps.detector, user.turn_index);
      record.emotion_readings.push_back(*latest_reading);
    }

    RoundDynamics dyn;
    dyn.round = round;
    if (cfg.memory_enabled) {
      const std::size_t n = std::min(cfg.extraction_window, state.transcript.size());
      const Transcript window(state.transcript.end() - static_cast<std::ptrdiff_t>(n), state.transcript.end());
      auto extracted = extract_events(window, gateway, cfg.aux_params, record.topic_id, record.session_id);
      record.extraction_warnings += extracted.warnings;
      dyn.events_extracted = static_cast<int>(extracted.events.size());
      graph.upsert_and_merge(extracted.events);
      if (round % cfg.extrapolation_period == 0 && graph.size() > 0) {
        const auto result = extrapolate_questions(graph, gateway, cfg.aux_params, record.topic_id);
        dyn.questions_extrapolated = static_cast<int>(result.questions.size());
      }
    }
    record.dynamics.push_back(dyn);
  }

  if (!record.transcript.empty()) {
    SummaryOptions so;
    so.session_id = record.session_id;
    so.ordinal = record.ordinal;
    so.token_cap = cfg.summary_token_cap;
    so.params = cfg.aux_params;
    so.topic_id = record.topic_id;
    record.summary = summarize_session(record.transcript, inputs.prior, gateway, so);
    if (deps.observer) deps.observer->on_summary(*record.summary);
  }
  if (deps.observer) deps.observer->on_session_end(record);
  return record;
}

InterviewRecord run_interview(const EngineConfig& cfg, const InterviewProtocol& protocol, UserChannel& channel,
                              const EngineDeps& deps, const InterviewOptions& options) {
  cfg.validate(protocol.topic_count());
  InterviewRecord record;
  record.interview_id = options.interview_id;
  record.persona_id = options.persona_id;
  record.seed = options.seed;
  record.config_snapshot = options.config_snapshot;

  std::set<std::string> completed;
  std::optional<SessionSummary> prior;
  for (int ordinal = 1; ordinal <= cfg.session_limit; ++ordinal) {
    const auto topic = next_topic(protocol, completed);
    if (!topic) break;
    try {
      const auto inputs = plan_session(cfg, protocol, *topic, ordinal, prior, *deps.gateway);
      SessionRecord session = run_session(cfg, protocol, inputs, channel, deps, record.graph);
      if (session.summary) {
        record.summaries.push_back(*session.summary);
        prior = session.summary;
      }
      const bool closed = session.rounds_used < cfg.round_limit && !session.timed_out;
      record.sessions.push_back(std::move(session));
      completed.insert(*topic);
      if (options.persist) options.persist(record);
      if (closed) break;
    } catch (const std::exception& e) {
      record.error = e.what();
      if (options.persist) options.persist(record);
      throw;
    }
  }
  record.complete = !record.error && completed.size() == static_cast<std::size_t>(cfg.session_limit);
  if (options.persist) options.persist(record);
  return record;
}

}  // namespace memoir
