#pragma once

#include <stdexcept>

namespace tdaqm {

/// Invalid scenario, flag or input file. The CLI maps this to exit code 1.
struct config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A computation degenerated (non-finite state, singular solve, ...).
/// The CLI maps this to exit code 3.
struct numerical_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace tdaqm
