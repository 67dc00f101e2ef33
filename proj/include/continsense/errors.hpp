#pragma once

#include <stdexcept>
#include <string>

namespace continsense {

// Every error thrown by the library derives from Error so callers can catch
// one type; the subclasses let the CLI map failures onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class ParameterError : public Error {
 public:
  using Error::Error;
};

class InputError : public Error {
 public:
  using Error::Error;
};

class RangeError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class MetricError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, int last_finite_epoch, double last_finite_loss)
      : Error(what), last_finite_epoch_(last_finite_epoch), last_finite_loss_(last_finite_loss) {}

  int last_finite_epoch() const noexcept { return last_finite_epoch_; }
  double last_finite_loss() const noexcept { return last_finite_loss_; }

 private:
  int last_finite_epoch_;
  double last_finite_loss_;
};

}  // namespace continsense
