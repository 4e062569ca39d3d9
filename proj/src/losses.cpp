#include "pavsgg/losses.hpp"

#include <cmath>
#include <set>
#include <stdexcept>

namespace pavsgg::loss {

using diff::Shape;
using diff::Tape;
using diff::Tensor;
using diff::Var;

void LossConfig::validate() const {
  if (lambda_pa < 0 || lambda_pam < 0) throw std::invalid_argument("loss config: lambdas must be >= 0");
  if (!(margin > 0)) throw std::invalid_argument("loss config: margin must be > 0");
  if (!(alpha > 0)) throw std::invalid_argument("loss config: alpha must be > 0");
  if (triplet_cap < 1) throw std::invalid_argument("loss config: triplet_cap must be >= 1");
}

namespace {

Var zero(Tape& tape) { return tape.constant(Tensor::scalar(0.0)); }

// -sum_i (w1_i log p_i + w0_i log(1 - p_i)) with p clamped.
Var weighted_bce(const Var& p, const Tensor& w1, const Tensor& w0) {
  Tape& tape = p.tape();
  Var pc = diff::clamp(p, kProbEps, 1.0 - kProbEps);
  Var log_p = diff::log(pc);
  Var log_q = diff::log(diff::add_scalar(diff::scale(pc, -1.0), 1.0));
  Var s = diff::sum(tape.constant(w1) * log_p) + diff::sum(tape.constant(w0) * log_q);
  return diff::scale(s, -1.0);
}

void check_indices(const Var& pa, std::span<const std::size_t> idx) {
  for (auto i : idx)
    if (i >= pa.value().numel())
      throw diff::ShapeError("pair index " + std::to_string(i) + " outside PA of shape " +
                             diff::shape_to_string(pa.shape()));
}

std::vector<double> hard_targets(std::size_t n, std::span<const std::size_t> pos) {
  std::vector<double> y(n, 0.0);
  for (auto i : pos) y[i] = 1.0;
  return y;
}

}  // namespace

Var pa_balanced(const Var& pa, std::span<const std::size_t> pos, std::span<const std::size_t> neg,
                std::span<const double> targets) {
  check_indices(pa, pos);
  check_indices(pa, neg);
  if (pos.empty() && neg.empty()) return zero(pa.tape());
  const std::size_t n = pa.value().numel();
  const double half = (pos.empty() || neg.empty()) ? 1.0 : 0.5;
  Tensor w1(pa.shape()), w0(pa.shape());
  auto fill = [&](std::span<const std::size_t> set) {
    if (set.empty()) return;
    const double c = half / static_cast<double>(set.size());
    for (auto i : set) {
      w1[i] += c * targets[i];
      w0[i] += c * (1.0 - targets[i]);
    }
  };
  if (targets.size() != n) throw diff::ShapeError("PA targets length does not match PA");
  fill(pos);
  fill(neg);
  return weighted_bce(pa, w1, w0);
}

Var pa_balanced(const Var& pa, std::span<const std::size_t> pos, std::span<const std::size_t> neg) {
  const auto y = hard_targets(pa.value().numel(), pos);
  return pa_balanced(pa, pos, neg, y);
}

Var pa_standard(const Var& pa, std::span<const std::size_t> pos, std::span<const std::size_t> neg,
                std::span<const double> targets) {
  check_indices(pa, pos);
  check_indices(pa, neg);
  const std::size_t count = pos.size() + neg.size();
  if (count == 0) return zero(pa.tape());
  if (targets.size() != pa.value().numel()) throw diff::ShapeError("PA targets length does not match PA");
  Tensor w1(pa.shape()), w0(pa.shape());
  const double c = 1.0 / static_cast<double>(count);
  for (auto set : {pos, neg}) {
    for (auto i : set) {
      w1[i] += c * targets[i];
      w0[i] += c * (1.0 - targets[i]);
    }
  }
  return weighted_bce(pa, w1, w0);
}

Var pa_standard(const Var& pa, std::span<const std::size_t> pos, std::span<const std::size_t> neg) {
  const auto y = hard_targets(pa.value().numel(), pos);
  return pa_standard(pa, pos, neg, y);
}

double adaptive_margin(double m_base, double y_pos, double y_neg) {
  return m_base * (y_pos - 0.5) * 2.0 * (0.5 - y_neg) * 2.0;
}

std::vector<Triplet> enumerate_triplets(std::span<const std::size_t> pos,
                                        std::span<const std::size_t> neg, double margin,
                                        std::size_t cap, std::mt19937_64& rng) {
  std::vector<Triplet> out;
  const std::size_t np = pos.size(), nn = neg.size();
  if (np < 2 || nn == 0) return out;
  const std::size_t count = np * (np - 1) * nn;
  auto decode = [&](std::size_t idx) {
    const std::size_t bn = idx % nn;
    idx /= nn;
    std::size_t bp = idx % (np - 1);
    const std::size_t a = idx / (np - 1);
    if (bp >= a) ++bp;
    return Triplet{pos[a], pos[bp], neg[bn], margin};
  };
  if (count <= cap) {
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) out.push_back(decode(i));
    return out;
  }
  // Floyd's sampling of `cap` distinct indices in [0, count).
  std::set<std::size_t> chosen;
  for (std::size_t j = count - cap; j < count; ++j) {
    const std::size_t r = std::uniform_int_distribution<std::size_t>(0, j)(rng);
    if (!chosen.insert(r).second) chosen.insert(j);
  }
  out.reserve(cap);
  for (auto idx : chosen) out.push_back(decode(idx));
  return out;
}

Var pam_triplet(const Var& gram, std::span<const Triplet> triplets, MarginMode mode) {
  Tape& tape = gram.tape();
  if (triplets.empty()) return zero(tape);
  if (gram.value().rank() != 2 || gram.value().dim(0) != gram.value().dim(1))
    throw diff::ShapeError("PAM loss needs a square affinity matrix, got " +
                           diff::shape_to_string(gram.shape()));
  const std::size_t n = gram.value().dim(0);
  std::vector<std::size_t> pos_idx, neg_idx;
  Tensor margins(Shape{triplets.size()});
  for (std::size_t i = 0; i < triplets.size(); ++i) {
    const auto& t = triplets[i];
    if (t.anchor >= n || t.positive >= n || t.negative >= n)
      throw diff::ShapeError("triplet index outside affinity matrix");
    pos_idx.push_back(t.anchor * n + t.positive);
    neg_idx.push_back(t.anchor * n + t.negative);
    margins[i] = t.margin;
  }
  Var gap = diff::gather(gram, neg_idx) - diff::gather(gram, pos_idx);
  Var terms = mode == MarginMode::Soft ? diff::softplus(gap)
                                       : diff::relu(gap + tape.constant(std::move(margins)));
  return diff::mean(terms);
}

Var relation(const Var& pc, std::span<const std::size_t> rows, std::span<const double> targets) {
  if (rows.empty()) return zero(pc.tape());
  if (pc.value().rank() != 2) throw diff::ShapeError("PC must be a matrix");
  const std::size_t c = pc.value().dim(1);
  if (targets.size() != rows.size() * c)
    throw diff::ShapeError("relation targets must be rows x predicates");
  Var sel = diff::gather_rows(pc, rows);
  const double w = 1.0 / static_cast<double>(rows.size() * c);
  Tensor w1(sel.shape()), w0(sel.shape());
  for (std::size_t i = 0; i < targets.size(); ++i) {
    w1[i] = w * targets[i];
    w0[i] = w * (1.0 - targets[i]);
  }
  return weighted_bce(sel, w1, w0);
}

double distance_weight(double delta_t, double alpha) { return 1.0 / std::pow(1.0 + delta_t, alpha); }

double soft_pa_target(double y_prop, double pa_teacher, double delta_t, double alpha) {
  const double w = distance_weight(delta_t, alpha);
  return w * y_prop + (1.0 - w) * pa_teacher;
}

double total_value(double rel, double pa, double pam, const LossConfig& cfg) {
  return rel + cfg.lambda_pa * pa + cfg.lambda_pam * pam;
}

Var total(const LossTerms& terms, const LossConfig& cfg, LossValues* values) {
  Var out = terms.rel + diff::scale(terms.pa, cfg.lambda_pa) + diff::scale(terms.pam, cfg.lambda_pam);
  if (values) {
    values->rel = terms.rel.value().item();
    values->pa = terms.pa.value().item();
    values->pam = terms.pam.value().item();
    values->total = out.value().item();
  }
  return out;
}

}  // namespace pavsgg::loss
