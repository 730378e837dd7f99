#pragma once

#include <vector>

#include "usr/tensor.hpp"

namespace usr::nn {

// Standard Adam with bias correction. Moments are kept per parameter in the
// order the optimizer was constructed with; step counts whole updates.
struct AdamState {
    std::int64_t step = 0;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.99;
    double eps = 1e-8;
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;

    static AdamState init(const std::vector<Parameter>& params, double lr, double beta1 = 0.9,
                          double beta2 = 0.99, double eps = 1e-8);
};

// Applies one update in place using each parameter's grad buffer. Throws
// NumericError (before touching any parameter) if a gradient is non-finite.
void adam_step(std::vector<Parameter>& params, AdamState& state);

void zero_grads(std::vector<Parameter>& params);

double grad_norm(const std::vector<Parameter>& params);

}  // namespace usr::nn
