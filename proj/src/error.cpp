#include "vmsched/error.hpp"

namespace vmsched {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedRow: return "MalformedRow";
    case ErrorCode::UnknownType: return "UnknownType";
    case ErrorCode::InvalidTrace: return "InvalidTrace";
    case ErrorCode::InvalidFlavor: return "InvalidFlavor";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::Infeasible: return "Infeasible";
    case ErrorCode::DuplicateVm: return "DuplicateVm";
    case ErrorCode::UnknownVm: return "UnknownVm";
    case ErrorCode::InvalidTraceForScenario: return "InvalidTraceForScenario";
    case ErrorCode::EpisodeFinished: return "EpisodeFinished";
    case ErrorCode::NoFeasibleAction: return "NoFeasibleAction";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

namespace {
std::string format_message(ErrorCode code, const std::string& reason, std::optional<std::size_t> line) {
  std::string msg(error_code_name(code));
  if (line) msg += "(line " + std::to_string(*line) + ")";
  if (!reason.empty()) msg += ": " + reason;
  return msg;
}
}  // namespace

Error::Error(ErrorCode code, const std::string& reason, std::optional<std::size_t> line)
    : std::runtime_error(format_message(code, reason, line)), code_(code), line_(line) {}

}  // namespace vmsched
