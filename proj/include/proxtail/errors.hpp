#pragma once

#include <stdexcept>
#include <string>

namespace proxtail {

// Runtime numerical failure (divergence, non-finite values, iteration caps).
// Argument and domain violations use std::invalid_argument / std::domain_error.
class numeric_error : public std::runtime_error {
 public:
  explicit numeric_error(const std::string& what, long iteration = -1)
      : std::runtime_error(what), iteration_(iteration) {}

  long iteration() const { return iteration_; }

 private:
  long iteration_;
};

}  // namespace proxtail
