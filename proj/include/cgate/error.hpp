#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace cgate {

// Base for every error the toolkit raises on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input: a bad JSONL line, a schema violation, a broken invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// A request asked for more records than a pool holds.
class CapacityError : public Error {
 public:
  CapacityError(const std::string& what, std::size_t required, std::size_t available)
      : Error(what + " (required " + std::to_string(required) + ", available " +
              std::to_string(available) + ", shortfall " +
              std::to_string(required > available ? required - available : 0) + ")"),
        required_(required),
        available_(available) {}

  std::size_t required() const { return required_; }
  std::size_t available() const { return available_; }
  std::size_t shortfall() const { return required_ > available_ ? required_ - available_ : 0; }

 private:
  std::size_t required_;
  std::size_t available_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class BackendError : public Error {
 public:
  using Error::Error;
};

// Judge returned something that is not a verdict.
class JudgeError : public Error {
 public:
  using Error::Error;
};

class EnrollmentError : public Error {
 public:
  EnrollmentError(const std::string& what, std::vector<std::size_t> completed_bits)
      : Error(what), completed_bits_(std::move(completed_bits)) {}
  const std::vector<std::size_t>& completed_bits() const { return completed_bits_; }

 private:
  std::vector<std::size_t> completed_bits_;
};

}  // namespace cgate
