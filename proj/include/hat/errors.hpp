#pragma once

#include <stdexcept>
#include <string>

namespace hat {

// Process exit codes used by the CLI. Library code throws the typed errors
// below; the CLI maps them to these codes at the top level.
enum class ExitCode : int {
  ok = 0,
  usage = 1,
  data = 2,
  endpoint = 3,
  verification = 4,
};

// Bad flags, bad config values, contradictory options.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Unreadable or malformed input data (corpus files, index bundles, fixtures).
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A remote dependency (embedding endpoint, chat endpoint, reranker) failed
// after the configured number of attempts.
struct EndpointError : std::runtime_error {
  EndpointError(const std::string& msg, int attempts_made = 1)
      : std::runtime_error(msg), attempts(attempts_made) {}
  int attempts;
};

// An internal consistency check failed (invariant violation, analysis
// verifier mismatch).
struct VerificationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace hat
