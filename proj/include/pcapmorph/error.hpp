#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace pcapmorph {

enum class ErrorCode {
  Parse,
  UnsupportedFormat,
  Io,
  Bounds,
  Ordering,
  TimeRegression,
  Staleness,
  State,
  Config,
  UndefinedMetric,
  DegenerateNormalization,
  InfeasibleMutation,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& msg)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + msg),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Parse failures carry the byte offset of the offending structure.
class ParseError : public Error {
 public:
  ParseError(const std::string& msg, std::size_t byte_offset)
      : Error(ErrorCode::Parse,
              msg + " (byte offset " + std::to_string(byte_offset) + ")"),
        offset_(byte_offset) {}

  std::size_t byte_offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

}  // namespace pcapmorph
