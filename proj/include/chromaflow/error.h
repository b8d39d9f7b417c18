#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>

namespace chromaflow {

// Operands whose spatial size or channel count disagree.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Filesystem or codec failure.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed feature pyramid file.
class FormatError : public std::runtime_error {
 public:
  enum class Kind { kMalformedHeader, kDimensionMismatch, kTruncatedPayload, kInvalidValue };

  FormatError(Kind kind, std::uint64_t offset, const std::string& what)
      : std::runtime_error(what + " (byte offset " + std::to_string(offset) + ")"),
        kind_(kind),
        offset_(offset) {}

  Kind kind() const { return kind_; }
  std::uint64_t offset() const { return offset_; }

 private:
  Kind kind_;
  std::uint64_t offset_;
};

// An optimizer produced or received a non-finite energy.
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Failure inside a named pipeline stage; what() is prefixed with the stage.
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& what)
      : std::runtime_error(stage + ": " + what), stage_(std::move(stage)) {}

  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

}  // namespace chromaflow
