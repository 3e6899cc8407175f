#pragma once

#include <stdexcept>
#include <string>

namespace ca {

// Misuse of an in-memory API: bad shapes, invalid arguments, consumed tapes.
class ContractError : public std::logic_error {
 public:
  explicit ContractError(const std::string& what) : std::logic_error(what) {}
};

// Tensor/layer shape mismatch. Message names the offending dimension.
class ShapeError : public ContractError {
 public:
  explicit ShapeError(const std::string& what) : ContractError(what) {}
};

// Filesystem failure: missing file, unwritable path, short read/write.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

// On-disk content is malformed: bad magic, bad version, bad header, non-binary mask.
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

// Invalid or inconsistent configuration.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Numerical failure during training (NaN loss and friends).
class NumericsError : public std::runtime_error {
 public:
  explicit NumericsError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace ca
