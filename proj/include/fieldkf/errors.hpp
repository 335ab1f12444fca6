#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace fieldkf {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Two fields that must share a sampling grid do not.
class GridMismatchError : public Error {
 public:
  using Error::Error;
};

/// A matrix that must be invertible (noise covariance, spectrum) is not.
class SingularMatrixError : public Error {
 public:
  SingularMatrixError(const std::string& msg, std::int64_t frequency_index = -1);
  std::int64_t frequency_index() const { return frequency_index_; }

 private:
  std::int64_t frequency_index_;
};

/// Non-finite state or covariance. Records the time index and the first
/// offending entry (-1 when the covariance is at fault).
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, std::int64_t step, std::int64_t entry);
  std::int64_t step() const { return step_; }
  std::int64_t entry() const { return entry_; }

 private:
  std::int64_t step_;
  std::int64_t entry_;
};

class CameraBelowTerrainError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Dataset schema violations, enumerated rather than stopping at the first.
class DatasetError : public Error {
 public:
  explicit DatasetError(std::vector<std::string> issues);
  const std::vector<std::string>& issues() const { return issues_; }

 private:
  std::vector<std::string> issues_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace fieldkf
