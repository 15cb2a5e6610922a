#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace vmsched {

enum class ErrorCode {
  MalformedRow,
  UnknownType,
  InvalidTrace,
  InvalidFlavor,
  InvalidConfig,
  Infeasible,
  DuplicateVm,
  UnknownVm,
  InvalidTraceForScenario,
  EpisodeFinished,
  NoFeasibleAction,
  IoError,
};

std::string_view error_code_name(ErrorCode code);

// All domain failures surface as this exception; the code carries the
// error's identity, the message a human-readable reason.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& reason, std::optional<std::size_t> line = std::nullopt);

  ErrorCode code() const noexcept { return code_; }
  // 1-based source line for parse errors.
  std::optional<std::size_t> line() const noexcept { return line_; }

 private:
  ErrorCode code_;
  std::optional<std::size_t> line_;
};

}  // namespace vmsched
