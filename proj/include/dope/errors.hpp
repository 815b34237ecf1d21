#pragma once

#include <stdexcept>
#include <string>

namespace dope {

/// Raised when the model assigns zero probability to the conditioning event.
class invalid_model : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when an enumeration would exceed its size budget.
class budget_exceeded : public std::length_error {
 public:
  using std::length_error::length_error;
};

/// Invalid input with the offending field name attached.
class validation_error : public std::invalid_argument {
 public:
  validation_error(std::string field, const std::string& message)
      : std::invalid_argument(message), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

}  // namespace dope
