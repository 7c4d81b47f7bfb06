#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cascade {

/// Malformed input file. `line` is 1-based, 0 when unknown.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& message, int line = 0, std::string field = {})
      : std::runtime_error(format(message, line, field)), line_(line), field_(std::move(field)) {}

  int line() const { return line_; }
  const std::string& field() const { return field_; }

 private:
  static std::string format(const std::string& message, int line, const std::string& field) {
    std::string out = message;
    if (line > 0) out += " (line " + std::to_string(line) + ")";
    if (!field.empty()) out += " [field '" + field + "']";
    return out;
  }

  int line_;
  std::string field_;
};

class ValidationError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Raised when an island's injections do not sum to zero.
class InfeasibleError : public std::runtime_error {
 public:
  InfeasibleError(const std::string& message, std::size_t island)
      : std::runtime_error(message), island_(island) {}
  std::size_t island() const { return island_; }

 private:
  std::size_t island_;
};

class SolverError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// The optimal-yield recursion exceeded a configured size guard.
class ResourceError : public std::runtime_error {
 public:
  ResourceError(const std::string& message, std::size_t intervals)
      : std::runtime_error(message), intervals_(intervals) {}
  std::size_t intervals() const { return intervals_; }

 private:
  std::size_t intervals_;
};

}  // namespace cascade
