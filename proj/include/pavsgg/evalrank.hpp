#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "pavsgg/ram.hpp"
#include "pavsgg/relnet.hpp"
#include "pavsgg/scene.hpp"

namespace pavsgg::eval {

enum class Protocol { WithConstraint, NoConstraint };
const char* to_string(Protocol p);

struct EvalConfig {
  std::vector<int> ks{10, 20, 50};
  double iou_threshold = 0.5;
  bool pa_scoring = true;
  bool pam = true;
  // Share of clips (the last ones in clip-id order) held out for testing.
  double test_fraction = 0.25;

  void validate() const;
};

// conf_s * conf_o * pc * pa, or without pa when scoring with it is disabled.
double composite_score(double conf_s, double conf_o, double pc, double pa, bool pa_enabled);

struct RankedTriplet {
  int subject = 0;
  int object = 0;
  int predicate = 0;
  double score = 0.0;
};

// Score descending, then (subject, object, predicate) ascending.
bool ranks_before(const RankedTriplet& a, const RankedTriplet& b);

std::vector<RankedTriplet> rank_frame(const relnet::FramePrediction& pred, const scene::Frame& frame,
                                      Protocol protocol, bool pa_enabled);

bool triplet_matches(const RankedTriplet& r, const scene::Frame& frame,
                     const scene::GroundTruthTriplet& gt, double iou_threshold);

// Number of ground-truth triplets hit by the top-k predictions, each
// prediction and each ground truth used at most once. Predictions are taken in
// rank order and a new one may re-route earlier assignments, so the count is
// the largest one-to-one matching.
std::size_t count_hits(const std::vector<RankedTriplet>& ranked, const scene::Frame& frame,
                       const std::vector<scene::GroundTruthTriplet>& gt, std::size_t k,
                       double iou_threshold);

// hits / |gt|; empty when the frame has no ground truth.
std::optional<double> recall_at_k(const std::vector<RankedTriplet>& ranked,
                                  const scene::Frame& frame,
                                  const std::vector<scene::GroundTruthTriplet>& gt, std::size_t k,
                                  double iou_threshold);

struct RecallEntry {
  Protocol protocol = Protocol::WithConstraint;
  int k = 0;
  double recall = 0.0;
};

struct HistogramBin {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t pos = 0;
  std::size_t neg = 0;
};

struct ClipNi {
  std::string clip_id;
  double ni_ratio = 0.0;
};

struct SubsetRecall {
  std::string name;
  std::vector<std::string> clip_ids;
  std::vector<RecallEntry> recalls;
};

struct EvalReport {
  std::size_t clips = 0;
  std::size_t frames = 0;
  std::size_t frames_with_gt = 0;
  bool pa_scoring = true;
  bool pam = true;
  std::vector<RecallEntry> recalls;
  std::optional<ram::PseudoLabelMetrics> pseudo_labels;
  std::vector<HistogramBin> pa_histogram;
  std::size_t pos_pairs = 0;
  std::size_t neg_pairs = 0;
  double mean_pa_pos = 0.0;
  double mean_pa_neg = 0.0;
  std::vector<ClipNi> ni;
  std::vector<SubsetRecall> subsets;

  // Throws std::out_of_range when (protocol, k) was not evaluated.
  double recall(Protocol protocol, int k) const;
};

// Clips are evaluated independently and reduced in input order. `partitions`,
// when given, are the middle-frame matches used for pseudo-label metrics.
EvalReport evaluate(const std::vector<const scene::VideoClip*>& clips,
                    const relnet::RelationModel& model, const EvalConfig& cfg,
                    int subject_class = scene::kPersonClass,
                    const std::vector<ram::MatchPartition>* partitions = nullptr);

nlohmann::json report_to_json(const EvalReport& report);

// report.json, metrics.csv and histograms.csv inside `dir`.
void write_report(const std::filesystem::path& dir, const EvalReport& report);

// Train/test split by clip order: the last ceil(n * test_fraction) clips are
// the test split.
std::size_t test_split_begin(std::size_t n_clips, double test_fraction);

}  // namespace pavsgg::eval
