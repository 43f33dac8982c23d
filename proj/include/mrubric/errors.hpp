#pragma once

#include <stdexcept>
#include <string>

namespace mrubric {

/// Failure categories. Validation kinds map to CLI exit code 2, numerical
/// kinds to exit code 3.
enum class ErrorKind {
  // validation
  CategoryRange,
  Configuration,
  Interval,
  Rank,
  InvalidState,
  InsufficientPool,
  Parse,
  FilterTooStrict,
  DigestMismatch,
  VersionMismatch,
  Io,
  // numerical
  DegenerateKernel,
  RankDeficiency,
  NumericalDegeneracy,
  StateCorruption,
};

const char* to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }
  bool numerical() const noexcept { return kind_ >= ErrorKind::DegenerateKernel; }

 private:
  ErrorKind kind_;
};

}  // namespace mrubric
