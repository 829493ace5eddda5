#include "memoir/error.hpp"

namespace memoir {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::BackendUnreachable: return "backend-unreachable";
    case ErrorCode::ScriptMiss: return "script-miss";
    case ErrorCode::BudgetExceeded: return "budget-exceeded";
    case ErrorCode::EmptyText: return "empty-text";
    case ErrorCode::InvalidRequest: return "invalid-request";
    case ErrorCode::ParseError: return "parse-error";
    case ErrorCode::DuplicateTopicId: return "duplicate-topic-id";
    case ErrorCode::EmptySeedQuestions: return "empty-seed-questions";
    case ErrorCode::UnknownCompletedId: return "unknown-completed-id";
    case ErrorCode::UnknownTopic: return "unknown-topic";
    case ErrorCode::MalformedLine: return "malformed-line";
    case ErrorCode::DetectorUnreachable: return "detector-unreachable";
    case ErrorCode::EmptyModelReply: return "empty-model-reply";
    case ErrorCode::ChannelClosed: return "channel-closed";
    case ErrorCode::EmptyRetrieveQuery: return "marker-present-but-empty-query";
    case ErrorCode::GapInOrdinals: return "gap-in-ordinals";
    case ErrorCode::EmptyGroundTruth: return "empty-E_GT";
    case ErrorCode::EmptyInterviewEvents: return "empty-E_intw";
    case ErrorCode::UnparseableScore: return "unparseable-score";
    case ErrorCode::UnparseableVerdict: return "unparseable-verdict";
    case ErrorCode::EmptyVerdictList: return "empty-verdict-list";
    case ErrorCode::ZeroTotal: return "zero-total";
    case ErrorCode::NoReadings: return "no-readings";
    case ErrorCode::InvalidConfig: return "invalid-config";
    case ErrorCode::CapacityExceeded: return "capacity-exceeded";
    case ErrorCode::WrongStatus: return "wrong-status";
    case ErrorCode::UnknownId: return "unknown-id";
    case ErrorCode::InvalidPayload: return "invalid-payload";
    case ErrorCode::JobNotFound: return "job-not-found";
    case ErrorCode::ValidationError: return "validation-error";
    case ErrorCode::UnknownSubcommand: return "unknown-subcommand";
    case ErrorCode::IoError: return "io-error";
  }
  return "unknown";
}

}  // namespace memoir
