#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace pavsgg::scene {

// Virtual image geometry shared by every clip.
inline constexpr double kImageSize = 512.0;
inline constexpr int kDefaultGrid = 32;
// Class 0 is the person class; candidate subjects are restricted to it by default.
inline constexpr int kPersonClass = 0;

struct BoundingBox {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }
  double center_x() const { return 0.5 * (x1 + x2); }
  double center_y() const { return 0.5 * (y1 + y2); }
  bool valid() const;

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

// Intersection over union; 0 for disjoint boxes.
double iou(const BoundingBox& a, const BoundingBox& b);

struct Detection {
  int id = 0;
  BoundingBox box;
  int class_id = 0;
  double confidence = 1.0;
  std::vector<double> feature;

  friend bool operator==(const Detection&, const Detection&) = default;
};

struct UnlocalizedTriplet {
  int subject_class = 0;
  int predicate = 0;
  int object_class = 0;

  friend auto operator<=>(const UnlocalizedTriplet&, const UnlocalizedTriplet&) = default;
};

struct GroundedEntity {
  BoundingBox box;
  int class_id = 0;

  friend bool operator==(const GroundedEntity&, const GroundedEntity&) = default;
};

struct GroundTruthTriplet {
  GroundedEntity subject;
  int predicate = 0;
  GroundedEntity object;

  friend bool operator==(const GroundTruthTriplet&, const GroundTruthTriplet&) = default;
};

struct Frame {
  int t = 0;
  std::vector<Detection> detections;
  // Present only for generated data.
  std::optional<std::vector<GroundTruthTriplet>> oracle_gt;

  const Detection& detection(int id) const;

  friend bool operator==(const Frame&, const Frame&) = default;
};

struct VideoClip {
  std::string clip_id;
  std::vector<Frame> frames;
  int middle_index = 0;
  std::vector<UnlocalizedTriplet> annotations;

  const Frame& middle() const { return frames.at(static_cast<std::size_t>(middle_index)); }

  friend bool operator==(const VideoClip&, const VideoClip&) = default;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Throws DataError describing the first violated invariant.
void validate_clip(const VideoClip& clip, int feature_dim, int num_classes, int num_predicates);

// Ordered (subject, object) candidate pair by detection id.
struct PairIndex {
  int subject = 0;
  int object = 0;

  friend auto operator<=>(const PairIndex&, const PairIndex&) = default;
};

// All ordered pairs of distinct detections, subjects restricted to
// `subject_class` unless it is negative. Order: subject id, then object id.
std::vector<PairIndex> enumerate_pairs(const Frame& frame, int subject_class = kPersonClass);

// Index of the first oracle triplet whose subject/object classes agree with the
// two detections and whose boxes overlap them with IoU > `iou_threshold`.
std::optional<std::size_t> oracle_match(const Frame& frame, const PairIndex& pair,
                                        double iou_threshold = 0.5);

// Elementwise max of two features; the desk-scale stand-in for a union-box feature.
std::vector<double> union_feature(const std::vector<double>& a, const std::vector<double>& b);

struct GenConfig {
  int clips = 120;
  int frames_per_clip = 5;
  int interactive_triplets = 2;
  int distractors_per_frame = 8;
  int num_classes = 10;
  int num_predicates = 6;
  int feature_dim = 32;
  double feature_noise = 0.35;
  // Probability that an interaction uses the class-default predicate
  // (object_class mod num_predicates) instead of a uniform draw.
  double predicate_regularity = 0.8;
  double box_jitter = 3.0;
  double motion = 4.0;
  double interactive_conf_lo = 0.30;
  double interactive_conf_hi = 0.80;
  double distractor_conf_lo = 0.50;
  double distractor_conf_hi = 1.00;
  // Attention synthesis.
  double peak_sharpness = 2.0;
  double distractor_leak = 0.5;
  double attention_quality_lo = 0.6;
  double attention_quality_hi = 1.0;
  double vl_failure = 0.1;
  int attention_grid = kDefaultGrid;
  double duplicate_instance = 0.4;
  std::uint64_t seed = 2024;

  void validate() const;
};

// Deterministic in (cfg, clip_seed).
VideoClip generate_clip(const GenConfig& cfg, std::uint64_t clip_seed);

// Seed of the i-th clip of a corpus generated from `corpus_seed`.
std::uint64_t clip_seed_for(std::uint64_t corpus_seed, std::size_t index);

std::vector<VideoClip> generate_corpus(const GenConfig& cfg);

// Fraction of candidate pairs that match no oracle triplet, pooled over frames.
double non_interactive_ratio(const VideoClip& clip, int subject_class = kPersonClass);

}  // namespace pavsgg::scene
