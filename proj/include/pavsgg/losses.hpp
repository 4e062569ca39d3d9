#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "pavsgg/diff/ops.hpp"

namespace pavsgg::loss {

enum class MarginMode { Hard, Soft, Adaptive };
enum class PaBceMode { Balanced, Standard };

struct LossConfig {
  double lambda_pa = 1.0;
  double lambda_pam = 0.1;
  double margin = 1.0;
  MarginMode margin_mode = MarginMode::Hard;
  double alpha = 3.0;
  PaBceMode pa_bce = PaBceMode::Balanced;
  int triplet_cap = 512;

  void validate() const;
};

// Probabilities are clamped to [kProbEps, 1 - kProbEps] before logs.
inline constexpr double kProbEps = 1e-7;

// Class-balanced BCE over pair affinities. `pos` and `neg` index entries of
// `pa` (shape {n}); `targets` (length n) gives the soft target of each entry,
// and set membership decides which mean the entry contributes to. With hard
// targets this is -1/2 [mean_pos log PA + mean_neg log(1-PA)]. An empty set
// drops its term and the other gets full weight; both empty gives 0.
diff::Var pa_balanced(const diff::Var& pa, std::span<const std::size_t> pos,
                      std::span<const std::size_t> neg, std::span<const double> targets);
diff::Var pa_balanced(const diff::Var& pa, std::span<const std::size_t> pos,
                      std::span<const std::size_t> neg);

// Unweighted BCE mean over pos and neg together.
diff::Var pa_standard(const diff::Var& pa, std::span<const std::size_t> pos,
                      std::span<const std::size_t> neg, std::span<const double> targets);
diff::Var pa_standard(const diff::Var& pa, std::span<const std::size_t> pos,
                      std::span<const std::size_t> neg);

// Anchor, positive and negative rows of one attention sequence, plus the
// margin to enforce for the hard/adaptive hinge.
struct Triplet {
  std::size_t anchor = 0;
  std::size_t positive = 0;
  std::size_t negative = 0;
  double margin = 1.0;
};

// m_base * (y_pos - 0.5) * 2 * (0.5 - y_neg) * 2
double adaptive_margin(double m_base, double y_pos, double y_neg);

// Every (a, b+, b-) with a != b+ drawn from `pos` and b- from `neg`; when the
// enumeration exceeds `cap`, `cap` of them are drawn uniformly without
// replacement. Fewer than two positives or no negatives gives none.
std::vector<Triplet> enumerate_triplets(std::span<const std::size_t> pos,
                                        std::span<const std::size_t> neg, double margin,
                                        std::size_t cap, std::mt19937_64& rng);

// Mean over triplets of max(0, G[a,b-] - G[a,b+] + margin) (hard/adaptive) or
// log(1 + exp(G[a,b-] - G[a,b+])) (soft). Returns a zero constant when empty.
diff::Var pam_triplet(const diff::Var& gram, std::span<const Triplet> triplets, MarginMode mode);

// Multi-label BCE averaged over (row, predicate) cells of the selected rows.
// `targets` is rows.size() x num_predicates, row-major.
diff::Var relation(const diff::Var& pc, std::span<const std::size_t> rows,
                   std::span<const double> targets);

// w = 1 / (1 + dt)^alpha
double distance_weight(double delta_t, double alpha);
// w * y_prop + (1 - w) * pa_teacher
double soft_pa_target(double y_prop, double pa_teacher, double delta_t, double alpha);

struct LossValues {
  double rel = 0.0;
  double pa = 0.0;
  double pam = 0.0;
  double total = 0.0;
};

struct LossTerms {
  diff::Var rel;
  diff::Var pa;
  diff::Var pam;
};

// L_rel + lambda_pa * L_pa + lambda_pam * L_pam
double total_value(double rel, double pa, double pam, const LossConfig& cfg);
diff::Var total(const LossTerms& terms, const LossConfig& cfg, LossValues* values = nullptr);

}  // namespace pavsgg::loss
