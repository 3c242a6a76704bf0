#pragma once

#include <stdexcept>
#include <string>

namespace vseg {

// Base class for all library errors. Subclasses map onto CLI exit codes:
// ConfigError/FormatError/UsageError -> 1, NumericsError and the rest -> 2.
class Error : public std::runtime_error {
  public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Mismatched tensor extents, broken resolution chains, bad axes.
class ShapeError : public Error {
  public:
    explicit ShapeError(const std::string& msg) : Error(msg) {}
};

// Invalid configuration values (non-positive output extents, bad enum
// strings, indivisible volume sizes, malformed config files).
class ConfigError : public Error {
  public:
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// On-disk container violations (magic, version, truncation).
class FormatError : public Error {
  public:
    explicit FormatError(const std::string& msg) : Error(msg) {}
};

// Non-finite values where finite ones are required, contract violations
// of numeric preconditions (e.g. alpha < 1 in the evidential KL).
class NumericsError : public Error {
  public:
    explicit NumericsError(const std::string& msg) : Error(msg) {}
};

// Command-line misuse.
class UsageError : public Error {
  public:
    explicit UsageError(const std::string& msg) : Error(msg) {}
};

// Metric is undefined for the given inputs (e.g. ASSD with an empty mask).
class UndefinedMetricError : public Error {
  public:
    explicit UndefinedMetricError(const std::string& msg) : Error(msg) {}
};

}  // namespace vseg
