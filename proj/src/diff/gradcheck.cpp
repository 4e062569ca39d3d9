#include "pavsgg/diff/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace pavsgg::diff {

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

GradcheckResult finite_diff_check(const LossBuilder& build, ParamStore& store, double h) {
  store.zero_grad();
  {
    Tape tape;
    Var loss = build(tape, store);
    backward(tape, loss, store);
  }

  auto evaluate = [&] {
    Tape tape;
    return build(tape, store).value().item();
  };

  GradcheckResult result;
  for (auto& p : store) {
    for (std::size_t i = 0; i < p.value.numel(); ++i) {
      const double saved = p.value[i];
      p.value[i] = saved + h;
      const double up = evaluate();
      p.value[i] = saved - h;
      const double down = evaluate();
      p.value[i] = saved;

      const double numeric = (up - down) / (2.0 * h);
      const double analytic = p.grad[i];
      const double err = relative_error(analytic, numeric);
      ++result.coordinates;
      if (result.worst_param.empty() || err > result.max_relative_error) {
        result.max_relative_error = err;
        result.worst_param = p.name;
        result.worst_index = i;
        result.analytic = analytic;
        result.numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace pavsgg::diff
