#pragma once

#include <stdexcept>
#include <string>

namespace mainet {

/// Tensor shapes incompatible with each other or with an op's requirements.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Invalid configuration values (kernel geometry, split ratios, STFT sizes, ...).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// API misuse: non-scalar loss in a gradient check, replaying a consumed tape, ...
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Evidence combination left no support on any class.
class DegenerateCombinationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input payload (CSV row, WAV/PNG structure). `where` is a row or
/// byte position hint for diagnostics.
class DataFormatError : public std::runtime_error {
 public:
  DataFormatError(const std::string& msg, long where = -1)
      : std::runtime_error(msg), where_(where) {}
  long where() const { return where_; }

 private:
  long where_;
};

/// A required input file or directory does not exist.
class MissingInputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mainet
