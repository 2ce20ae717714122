#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dvr {

// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

// Malformed or unusable input data (parse failures, degenerate datasets).
class DataError : public Error {
 public:
  using Error::Error;
};

// Invalid solver or experiment parameters.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// A local update produced a non-finite iterate.
class DivergenceError : public Error {
 public:
  DivergenceError(std::size_t round, std::size_t worker, std::size_t step)
      : Error("divergence at round " + std::to_string(round) + ", worker " +
              std::to_string(worker) + ", inner step " + std::to_string(step)),
        round_(round),
        worker_(worker),
        step_(step) {}

  std::size_t round() const noexcept { return round_; }
  std::size_t worker() const noexcept { return worker_; }
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t round_;
  std::size_t worker_;
  std::size_t step_;
};

// An iterative reference solve hit its iteration cap.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double achieved)
      : Error(what), achieved_(achieved) {}
  double achieved() const noexcept { return achieved_; }

 private:
  double achieved_;
};

}  // namespace dvr
