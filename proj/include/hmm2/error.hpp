#pragma once

#include <stdexcept>
#include <string>

namespace hmm2 {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file; carries the 1-based line number when known (0 otherwise).
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// An observation that no state can emit (every emission probability is zero).
class ImpossibleObservation : public Error {
 public:
  ImpossibleObservation(std::size_t position, std::size_t sequence = npos)
      : Error(message(position, sequence)), position_(position), sequence_(sequence) {}

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);
  std::size_t position() const noexcept { return position_; }
  std::size_t sequence() const noexcept { return sequence_; }

 private:
  static std::string message(std::size_t position, std::size_t sequence) {
    std::string s = "impossible observation at t=" + std::to_string(position);
    if (sequence != npos) s += " in sequence " + std::to_string(sequence);
    return s;
  }
  std::size_t position_;
  std::size_t sequence_;
};

}  // namespace hmm2
