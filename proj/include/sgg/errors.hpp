#pragma once

#include <stdexcept>
#include <string>

namespace sgg {

// Bad input data or configuration supplied by the caller/user. The CLI maps
// these to exit code 2; everything else exits 1.
struct UserError : std::runtime_error {
  explicit UserError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ParseError : UserError {
  explicit ParseError(const std::string& msg) : UserError(msg) {}
};

struct VocabularyError : UserError {
  explicit VocabularyError(const std::string& msg) : UserError(msg) {}
};

struct ConfigError : UserError {
  explicit ConfigError(const std::string& msg) : UserError(msg) {}
};

struct GeometryError : UserError {
  explicit GeometryError(const std::string& msg) : UserError(msg) {}
};

struct GenerationError : UserError {
  explicit GenerationError(const std::string& msg) : UserError(msg) {}
};

struct TrainingError : std::runtime_error {
  explicit TrainingError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : UserError {
  explicit IoError(const std::string& msg) : UserError(msg) {}
};

}  // namespace sgg
