#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace router {

/// Exit codes reported by the command-line front end. Each error class maps to one.
enum class ExitCode : int {
  kSuccess = 0,
  kUnknown = 1,
  kConfig = 2,
  kSolver = 3,
  kStatistics = 4,
  kIo = 5,
  kResource = 6,
};

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what, ExitCode code = ExitCode::kUnknown)
      : std::runtime_error(what), code_(code) {}
  ExitCode code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

/// Invalid parameters, malformed configuration, unknown keys.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(what, ExitCode::kConfig) {}
};

/// Linear solve / integrator failure. Carries a diagnostic figure (residual or condition estimate).
class SolverError : public Error {
 public:
  SolverError(const std::string& what, double diagnostic = 0.0)
      : Error(what, ExitCode::kSolver), diagnostic_(diagnostic) {}
  double diagnostic() const noexcept { return diagnostic_; }

 private:
  double diagnostic_;
};

/// Problem too large for the configured caps, or step size underflow.
class ResourceError : public Error {
 public:
  explicit ResourceError(const std::string& what) : Error(what, ExitCode::kResource) {}
};

/// Not enough data for a meaningful estimate.
class StatisticsError : public Error {
 public:
  explicit StatisticsError(const std::string& what) : Error(what, ExitCode::kStatistics) {}
};

/// Malformed input file. `line` is 1-based, 0 when not applicable.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(line ? what + " (line " + std::to_string(line) + ")" : what, ExitCode::kIo), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Well-formed input that violates a data invariant (e.g. decreasing timestamps).
class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what) : Error(what, ExitCode::kIo) {}
};

}  // namespace router
