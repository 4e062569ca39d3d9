#pragma once

#include <optional>
#include <set>
#include <stdexcept>
#include <variant>
#include <vector>

#include "json.hpp"
#include "pavsgg/attention.hpp"
#include "pavsgg/scene.hpp"

// Relation-aware matching: turns class-level annotation matching into grounded
// matching using attention reliability and per-box grounding scores.
namespace pavsgg::ram {

struct RamConfig {
  double tau_r = 0.3;
  double tau_gs = 0.2;
  bool enabled = true;
  // Candidate subjects are restricted to this class; negative means any class.
  int subject_class = scene::kPersonClass;

  void validate() const;
};

class ZeroAttentionMass : public std::domain_error {
 public:
  ZeroAttentionMass() : std::domain_error("attention map has zero total mass") {}
};

class EmptyBoxProjection : public std::domain_error {
 public:
  EmptyBoxProjection() : std::domain_error("box covers no attention cell centers") {}
};

struct ReliabilityResult {
  double sigma_spat = 0.0;
  double r = 0.0;
  double mu_x = 0.0;
  double mu_y = 0.0;
  double total_mass = 0.0;
};

// Spatial dispersion of the normalized map around its weighted centroid, in
// cell-index units; r = exp(-sigma / sqrt(H^2 + W^2)). A zero-mass map gets r = 0.
ReliabilityResult reliability(const scene::AttentionMap& map);

// Fraction of total mass inside the box. Throws ZeroAttentionMass.
double concentration(const scene::AttentionMap& map, const scene::BoundingBox& box);
// In-box mass per covered cell. Throws EmptyBoxProjection.
double density(const scene::AttentionMap& map, const scene::BoundingBox& box);
// concentration * sigmoid(density).
double grounding_score(const scene::AttentionMap& map, const scene::BoundingBox& box);

struct CandidateScore {
  int detection_id = 0;
  double concentration = 0.0;
  double density = 0.0;
  double gs = 0.0;
};

struct GroundingResult {
  std::vector<CandidateScore> candidates;
  std::optional<int> best;
};

// GS for each candidate; `best` is the argmax (lowest id on ties) when it
// strictly exceeds tau_gs. Candidates covering no cell score 0.
GroundingResult ground_candidates(const scene::AttentionMap& map,
                                  const std::vector<const scene::Detection*>& candidates,
                                  double tau_gs);

struct Grounded {
  int detection_id;
  friend bool operator==(const Grounded&, const Grounded&) = default;
};
struct ClassFallback {
  std::vector<int> detection_ids;
  friend bool operator==(const ClassFallback&, const ClassFallback&) = default;
};
struct Discarded {
  friend bool operator==(const Discarded&, const Discarded&) = default;
};
using MatchDecision = std::variant<Grounded, ClassFallback, Discarded>;

// Detection ids the decision resolves to (empty for Discarded).
std::vector<int> resolved_ids(const MatchDecision& d);

MatchDecision match_entity(int entity_class, const std::vector<scene::Detection>& detections,
                           const scene::AttentionMap& map, const RamConfig& cfg);

// Class-level matching only; the path taken when RAM is disabled.
MatchDecision match_entity_by_class(int entity_class,
                                    const std::vector<scene::Detection>& detections);

struct EntityDecisions {
  MatchDecision subject;
  MatchDecision object;
};

struct PositivePair {
  scene::PairIndex pair;
  std::set<int> predicates;
  friend bool operator==(const PositivePair&, const PositivePair&) = default;
};

struct MatchPartition {
  int t = 0;
  std::vector<PositivePair> positives;
  std::vector<scene::PairIndex> negatives;
  friend bool operator==(const MatchPartition&, const MatchPartition&) = default;
};

// P+ holds every candidate pair that some annotation resolves to (union of
// predicates); P- is the rest of the candidate enumeration, in order.
MatchPartition build_partition(const scene::VideoClip& clip,
                               const std::vector<EntityDecisions>& decisions, int t,
                               int subject_class = scene::kPersonClass);

// Runs matching for every middle-frame annotation and builds the partition.
// Missing attention maps are treated as zero-mass (class fallback).
MatchPartition match_clip(const scene::VideoClip& clip, const scene::AttentionStore& attention,
                          const RamConfig& cfg);

struct PseudoLabelMetrics {
  std::size_t match_count = 0;
  std::size_t true_positives = 0;
  std::size_t gt_count = 0;
  std::size_t gt_covered = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

double f1_score(double precision, double recall);

// P+ entries are true positives when both detections overlap the boxes of one
// oracle triplet with IoU > 0.5 and matching classes. Recall counts oracle
// triplets covered by at least one true positive.
PseudoLabelMetrics pseudo_label_metrics(const MatchPartition& partition, const scene::Frame& oracle);

// Sums counts over clips and recomputes the ratios.
PseudoLabelMetrics aggregate(const std::vector<PseudoLabelMetrics>& per_clip);

nlohmann::json partition_to_json(const std::string& clip_id, const MatchPartition& p);
MatchPartition partition_from_json(const nlohmann::json& j);

}  // namespace pavsgg::ram
