#pragma once

#include <stdexcept>
#include <string>

namespace slgan {

// Bad hyperparameters, shape contracts violated by configuration, unknown modes.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller-supplied data that violates a type invariant.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Checksum mismatch, truncation, or otherwise unreadable persisted state.
class IntegrityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class VersionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class GateFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NonFiniteLoss : public std::runtime_error {
 public:
  NonFiniteLoss(std::string term, const std::string& what)
      : std::runtime_error(what), term_(std::move(term)) {}
  const std::string& term() const noexcept { return term_; }

 private:
  std::string term_;
};

}  // namespace slgan
