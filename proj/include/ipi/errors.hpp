#pragma once

#include <stdexcept>
#include <string>

#include "types.hpp"

namespace ipi {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IndexOutOfRange : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class InvalidWorkerCount : public Error {
 public:
  using Error::Error;
};

class PartitionMismatch : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Raised by user-supplied generator callbacks; records the state-action pair.
class CallbackError : public Error {
 public:
  CallbackError(index_t state, index_t action, const std::string& what)
      : Error("callback failed at (" + std::to_string(state) + "," + std::to_string(action) +
              "): " + what),
        state_(state),
        action_(action) {}

  index_t state() const noexcept { return state_; }
  index_t action() const noexcept { return action_; }

 private:
  index_t state_;
  index_t action_;
};

}  // namespace ipi
