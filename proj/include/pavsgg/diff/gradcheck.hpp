#pragma once

#include <functional>
#include <string>
#include <vector>

#include "pavsgg/diff/params.hpp"
#include "pavsgg/diff/tape.hpp"

namespace pavsgg::diff {

// Builds a scalar loss on the given tape from the parameters in the store.
using LossBuilder = std::function<Var(Tape&, const ParamStore&)>;

struct GradcheckResult {
  double max_relative_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coordinates = 0;
};

// |g_ad - g_fd| / max(1e-8, |g_ad| + |g_fd|)
double relative_error(double analytic, double numeric);

// Compares reverse-mode gradients with central differences of step `h` on
// every coordinate of every parameter. `store` is restored before returning.
GradcheckResult finite_diff_check(const LossBuilder& build, ParamStore& store, double h = 1e-4);

}  // namespace pavsgg::diff
