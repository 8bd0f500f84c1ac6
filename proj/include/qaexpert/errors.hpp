#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace qaexpert {

/// Caller broke an operation's precondition (shape, rank, index range).
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Input data is structurally inconsistent (orphan answer, duplicate id, ...).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed text or XML input. Carries the 1-based line when known.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& source, std::int64_t line, const std::string& what)
      : std::runtime_error(source + ":" + std::to_string(line) + ": " + what),
        source_(source),
        line_(line) {}

  const std::string& source() const noexcept { return source_; }
  std::int64_t line() const noexcept { return line_; }

 private:
  std::string source_;
  std::int64_t line_;
};

class EmptyInputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A level-1 tree group has no leaves, so its mean is undefined.
class DegenerateGroupError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An iterate became non-finite.
class SolverDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Model and snapshot were produced from different index tables.
class VersionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace qaexpert
