#pragma once

#include <stdexcept>
#include <string>

namespace loom {

enum class ErrorCode {
  MalformedDescriptor,
  MalformedUpdate,
  MalformedSubscription,
  ExpressionSyntax,
  UnknownFunction,
  DanglingAlias,
  UnknownSource,
  NotFound,
  Conflict,
  BadRange,
  CompositeStreamWrite,
  QueueFull,
  InfeasibleKnobs,
  RuntimeUnhealthy,
  IoError,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string message)
      : std::runtime_error(std::move(message)), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace loom
