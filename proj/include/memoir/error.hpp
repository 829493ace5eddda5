#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace memoir {

enum class ErrorCode {
  // gateway
  BackendUnreachable,
  ScriptMiss,
  BudgetExceeded,
  EmptyText,
  InvalidRequest,
  // protocol
  ParseError,
  DuplicateTopicId,
  EmptySeedQuestions,
  UnknownCompletedId,
  UnknownTopic,
  // memory graph
  MalformedLine,
  // empathy
  DetectorUnreachable,
  // engine
  EmptyModelReply,
  ChannelClosed,
  // proxy
  EmptyRetrieveQuery,
  // autobiographer
  GapInOrdinals,
  // evaluation
  EmptyGroundTruth,
  EmptyInterviewEvents,
  UnparseableScore,
  UnparseableVerdict,
  EmptyVerdictList,
  ZeroTotal,
  NoReadings,
  // service
  InvalidConfig,
  CapacityExceeded,
  WrongStatus,
  UnknownId,
  InvalidPayload,
  JobNotFound,
  // shell
  ValidationError,
  UnknownSubcommand,
  IoError,
};

std::string_view to_string(ErrorCode code);

// Every failure surfaced by the library carries one of the codes above.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace memoir
