#pragma once

#include <functional>
#include <vector>

#include "usr/tensor.hpp"

namespace usr::nn {

// Scalar-valued closure over a list of input tensors. The closure must build a
// fresh graph on every call (inputs are mutated between evaluations).
using ScalarFn = std::function<TensorPtr(const std::vector<TensorPtr>&)>;

// Compares the analytic gradient of fn at `point` against central finite
// differences with per-coordinate step h*(|x|+1). Returns the worst relative
// error, |a - n| / max(|a|, |n|, 1). When max_coords > 0 and the point has
// more coordinates, a deterministic subset of that size is checked.
double grad_check(const ScalarFn& fn, const std::vector<TensorPtr>& point, double h = 1e-4,
                  std::int64_t max_coords = 0);

}  // namespace usr::nn
