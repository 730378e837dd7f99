#pragma once

#include <string>
#include <vector>

namespace usr::nn {

struct GradCheckEntry {
    std::string name;
    double max_rel_err = 0.0;
};

// Finite-difference verification of every differentiable op plus the
// SR-network / uncertainty-loss composites at a tiny configuration.
// module is one of "all", "nn", "aude", "vddc".
std::vector<GradCheckEntry> run_gradcheck_suite(const std::string& module);

inline constexpr double kGradCheckTolerance = 1e-5;

}  // namespace usr::nn
