#pragma once

#include <stdexcept>
#include <string>

namespace lowrank {

// Caller passed arguments that violate a precondition.
class usage_error : public std::invalid_argument {
 public:
  explicit usage_error(const std::string& what) : std::invalid_argument(what) {}
};

// Input data (files, datasets) could not be used.
class data_error : public std::runtime_error {
 public:
  explicit data_error(const std::string& what) : std::runtime_error(what) {}
};

// A numerical routine failed (e.g. a factorization hit a non-PD matrix).
class numerical_error : public std::runtime_error {
 public:
  explicit numerical_error(const std::string& what, int detail = -1)
      : std::runtime_error(what), detail_(detail) {}

  // Routine-specific index, e.g. the failing leading minor of a Cholesky.
  int detail() const { return detail_; }

 private:
  int detail_;
};

}  // namespace lowrank
