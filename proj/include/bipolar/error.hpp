#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace bipolar {

/// Failure classes surfaced by the library. The harness maps them to exit codes.
enum class ErrorCode {
  config,
  domain,
  stability,
  positivity,
  compatibility,
  vacuum_proximity,
  solver,
  fit,
  unsupported_branch,
  io,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::config: return "config";
    case ErrorCode::domain: return "domain";
    case ErrorCode::stability: return "stability";
    case ErrorCode::positivity: return "positivity";
    case ErrorCode::compatibility: return "compatibility";
    case ErrorCode::vacuum_proximity: return "vacuum-proximity";
    case ErrorCode::solver: return "solver";
    case ErrorCode::fit: return "fit";
    case ErrorCode::unsupported_branch: return "unsupported-branch";
    case ErrorCode::io: return "io";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + " error: " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Solver non-convergence keeps the last residual for diagnostics.
class SolverError : public Error {
 public:
  SolverError(const std::string& what, double residual, int iterations)
      : Error(ErrorCode::solver, what + " (residual " + std::to_string(residual) + " after " +
                                     std::to_string(iterations) + " iterations)"),
        residual_(residual),
        iterations_(iterations) {}

  double residual() const noexcept { return residual_; }
  int iterations() const noexcept { return iterations_; }

 private:
  double residual_;
  int iterations_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

inline void require(bool condition, ErrorCode code, const std::string& what) {
  if (!condition) fail(code, what);
}

}  // namespace bipolar
