#ifndef PEX_ERRORS_HPP_
#define PEX_ERRORS_HPP_

#include <cstddef>
#include <stdexcept>
#include <string>

namespace pex
{

/// Dimension or shape disagreement between operands.
class ShapeError : public std::invalid_argument
{
public:
  using std::invalid_argument::invalid_argument;
};

/// Non-finite value encountered where finite numbers are required.
class NonFiniteError : public std::runtime_error
{
public:
  NonFiniteError(const std::string & what, std::size_t layer)
  : std::runtime_error(what + " (layer " + std::to_string(layer) + ")"), layer_(layer) {}

  std::size_t layer() const noexcept { return layer_; }

private:
  std::size_t layer_;
};

/// Invalid or contradictory run configuration. CLI exit code 2.
class ConfigError : public std::invalid_argument
{
public:
  using std::invalid_argument::invalid_argument;
};

enum class DataErrorCode
{
  Io,
  BadMagic,
  VersionMismatch,
  Truncated,
  ChecksumMismatch,
  Mismatch,
};

inline const char * to_string(DataErrorCode code)
{
  switch (code) {
    case DataErrorCode::Io: return "io";
    case DataErrorCode::BadMagic: return "bad-magic";
    case DataErrorCode::VersionMismatch: return "version-mismatch";
    case DataErrorCode::Truncated: return "truncated";
    case DataErrorCode::ChecksumMismatch: return "checksum-mismatch";
    case DataErrorCode::Mismatch: return "mismatch";
  }
  return "unknown";
}

/// Dataset / checkpoint file problems. CLI exit code 3.
class DataError : public std::runtime_error
{
public:
  DataError(DataErrorCode code, const std::string & what)
  : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  DataErrorCode code() const noexcept { return code_; }

private:
  DataErrorCode code_;
};

}  // namespace pex

#endif  // PEX_ERRORS_HPP_
