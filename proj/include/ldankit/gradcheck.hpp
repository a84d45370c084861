#pragma once

#include <string>
#include <vector>

namespace ldankit::nn {

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0.0;
  bool pass = false;
};

inline constexpr double kGradCheckStep = 1e-3;
inline constexpr double kGradCheckTol = 1e-4;

// Central finite differences in double over `seeds` random draws for every
// layer kind and both loss heads. `corrupt_conv_control` adds one extra
// entry whose analytic gradient is deliberately wrong; it must FAIL (used as
// a negative control of the harness itself).
std::vector<GradCheckEntry> run_gradient_checks(int seeds = 10,
                                                bool corrupt_conv_control = false);

// Single-step and two-step hand-derived optimizer values plus the Adadelta
// gradient-scale invariance simulation.
std::vector<GradCheckEntry> run_optimizer_checks();

}  // namespace ldankit::nn
