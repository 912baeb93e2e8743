#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ope {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised when an estimator needs a propensity that is zero. Positions are
// reported 1-based.
class SupportViolation : public Error {
 public:
  SupportViolation(std::size_t item, std::size_t position)
      : Error("full-support violation: item " + std::to_string(item) +
              " has zero propensity at position " + std::to_string(position)),
        item_(item),
        position_(position) {}

  std::size_t item() const noexcept { return item_; }
  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t item_;
  std::size_t position_;
};

}  // namespace ope
