#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace depx {

// Base of every library error. The CLI maps kind() onto its exit codes.
class Error : public std::runtime_error {
 public:
  enum class Kind { kContract, kConfig, kParse, kValidation, kMissingEmbedding, kNumeric, kTraining, kIo };

  Error(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

  // True for failures caused by bad user input rather than a failed computation.
  bool is_validation() const noexcept {
    return kind_ == Kind::kContract || kind_ == Kind::kConfig || kind_ == Kind::kParse ||
           kind_ == Kind::kValidation || kind_ == Kind::kMissingEmbedding;
  }

 private:
  Kind kind_;
};

class ContractError : public Error {
 public:
  explicit ContractError(const std::string& what) : Error(Kind::kContract, what) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(Kind::kConfig, what) {}
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what) : Error(Kind::kValidation, what) {}
};

class ParseError : public Error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : Error(Kind::kParse, source + ":" + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class MissingEmbeddingError : public Error {
 public:
  explicit MissingEmbeddingError(const std::string& key)
      : Error(Kind::kMissingEmbedding, "no embedding stored for \"" + key + "\""), key_(key) {}

  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(Kind::kNumeric, what) {}
};

class TrainingError : public Error {
 public:
  explicit TrainingError(const std::string& what) : Error(Kind::kTraining, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(Kind::kIo, what) {}
};

}  // namespace depx
