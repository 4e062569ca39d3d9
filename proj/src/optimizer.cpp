#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "pavsgg/pipeline.hpp"

namespace pavsgg::pipeline {

void TrainConfig::validate() const {
  if (!(lr > 0)) throw std::invalid_argument("train config: lr must be > 0");
  if (epochs < 1) throw std::invalid_argument("train config: epochs must be >= 1");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1))
    throw std::invalid_argument("train config: betas must lie in [0,1)");
  if (!(eps > 0)) throw std::invalid_argument("train config: eps must be > 0");
  if (!(weight_decay >= 0)) throw std::invalid_argument("train config: weight_decay must be >= 0");
}

double cosine_lr(double base, std::int64_t step, std::int64_t total) {
  if (total <= 0) return base;
  const double s = static_cast<double>(std::clamp<std::int64_t>(step, 0, total));
  return base * 0.5 * (1.0 + std::cos(std::numbers::pi * s / static_cast<double>(total)));
}

void adamw_step(diff::ParamStore& store, const TrainConfig& cfg, double lr) {
  ++store.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(store.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(store.step));
  for (auto& p : store) {
    if (p.first_moment.shape() != p.value.shape()) p.first_moment = diff::Tensor(p.value.shape());
    if (p.second_moment.shape() != p.value.shape()) p.second_moment = diff::Tensor(p.value.shape());
    if (p.grad.shape() != p.value.shape()) p.grad = diff::Tensor(p.value.shape());
    auto w = p.value.data();
    auto g = p.grad.data();
    auto m = p.first_moment.data();
    auto v = p.second_moment.data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      w[i] -= lr * cfg.weight_decay * w[i];
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      w[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg.eps);
    }
  }
}

}  // namespace pavsgg::pipeline
