#pragma once

#include <stdexcept>
#include <string>

namespace kcflat {

// Numeric blow-up inside the integrator or the training loop. Carries the
// step (or epoch) index where non-finite values were first seen.
struct DivergenceError : std::runtime_error {
  long step_index;
  DivergenceError(const std::string &what, long step) : std::runtime_error(what), step_index(step) {}
};

// Thrown when grasp fine-tuning has an empty garment cloud to work with;
// the pipeline catches this and retries with a widened depth band.
struct NoGarmentVisibleError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tensor shape mismatch; carries the offending operator index when known.
struct ShapeError : std::invalid_argument {
  int op_index;
  explicit ShapeError(const std::string &what, int op = -1) : std::invalid_argument(what), op_index(op) {}
};

}  // namespace kcflat
