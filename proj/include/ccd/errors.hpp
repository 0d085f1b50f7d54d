#pragma once

#include <stdexcept>
#include <string>

namespace ccd {

// Error taxonomy used across the library. The CLI maps ConfigError to
// exit code 2 and everything else to exit code 1.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid configuration or usage (bad bounds, missing required inputs).
struct ConfigError : Error {
  using Error::Error;
};

// Bad data content (empty corpus, vocab mismatch against data).
struct DataError : Error {
  using Error::Error;
};

// Malformed persisted file; message carries the offending line number.
struct ParseError : Error {
  using Error::Error;
};

// Schema or vocab-hash mismatch between artifacts.
struct VersionError : Error {
  using Error::Error;
};

// Operation received an input violating its preconditions.
struct InputError : Error {
  using Error::Error;
};

// Teacher/student traces do not line up.
struct AlignmentError : Error {
  using Error::Error;
};

// Degenerate similarity input (zero-norm projected vector).
struct SimilarityError : Error {
  using Error::Error;
};

// Non-finite loss or other numeric failures.
struct NumericError : Error {
  using Error::Error;
};

// Filesystem failures.
struct IoError : Error {
  using Error::Error;
};

}  // namespace ccd
