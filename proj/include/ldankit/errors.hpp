#pragma once

#include <stdexcept>
#include <string>

namespace ldankit {

// Bad arguments or malformed data (CLI maps this to a usage error).
struct invalid_input_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Normal population cannot support the requested factorization.
struct degenerate_geometry_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Q-measure quadratic form vanished (DC-only lighting).
struct degenerate_lighting_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite loss or activation during training (CLI exit code 3).
struct numerical_abort_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Required file / dataset split / checkpoint absent (CLI exit code 4).
struct missing_input_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace ldankit
