#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tear {

/// Point configuration cannot determine a unique pose (too few or collinear points).
class DegenerateConfiguration : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Fewer than three pairs survive the second stage.
class InsufficientInliers : public std::runtime_error {
 public:
  InsufficientInliers(const std::string& what, std::size_t found)
      : std::runtime_error(what), found_(found) {}
  std::size_t found() const { return found_; }

 private:
  std::size_t found_;
};

/// A stage produced an empty inlier set.
class RegistrationFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Lower bound above the upper bound on the same branch. Always a bug.
class InternalConsistencyError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

}  // namespace tear
