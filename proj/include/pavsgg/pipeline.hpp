#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "pavsgg/diff/params.hpp"
#include "pavsgg/losses.hpp"
#include "pavsgg/ram.hpp"
#include "pavsgg/relnet.hpp"
#include "pavsgg/scene.hpp"

namespace pavsgg::pipeline {

struct TrainConfig {
  double lr = 1e-3;
  int epochs = 5;
  std::uint64_t seed = 11;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;

  void validate() const;
};

// lr_base * 1/2 * (1 + cos(pi * step / total)); step is clamped to [0, total].
double cosine_lr(double base, std::int64_t step, std::int64_t total);

// One AdamW update (decoupled weight decay) from the accumulated gradients,
// using learning rate `lr`. Increments store.step and leaves gradients as-is.
void adamw_step(diff::ParamStore& store, const TrainConfig& cfg, double lr);

struct PropagatedFrame {
  int t = 0;
  int delta_t = 0;
  ram::MatchPartition partition;
};

// One entry per clip frame, in frame order.
using PropagatedLabels = std::vector<PropagatedFrame>;

// Copies middle-frame positives to every other frame through same-class
// detections with IoU >= 0.5 against the middle-frame boxes.
PropagatedLabels propagate_labels(const scene::VideoClip& clip, const ram::MatchPartition& middle,
                                  int subject_class = scene::kPersonClass);

struct EpochLog {
  int epoch = 0;
  loss::LossValues loss;  // means over clips
  double lr = 0.0;        // rate used by the epoch's last step
};

struct TrainResult {
  relnet::RelationModel model;
  std::vector<EpochLog> log;
};

// Training clips with their middle-frame partitions (same order).
struct TrainingSet {
  std::vector<const scene::VideoClip*> clips;
  std::vector<ram::MatchPartition> partitions;
};

// Middle frames only, hard PA targets, fixed PAM margin.
TrainResult train_step1(const TrainingSet& data, const relnet::ModelConfig& model_cfg,
                        const loss::LossConfig& loss_cfg, const TrainConfig& train_cfg,
                        int subject_class = scene::kPersonClass);

// All frames with propagated labels; PA and predicate targets blended with the
// teacher by temporal distance, adaptive PAM margin. The student starts from a
// fresh initialization with the teacher's model config.
TrainResult train_step2(const TrainingSet& data, const relnet::RelationModel& teacher,
                        const loss::LossConfig& loss_cfg, const TrainConfig& train_cfg,
                        int subject_class = scene::kPersonClass);

// Columns: epoch, L_rel, L_PA, L_PAM, total, lr.
void write_log_csv(const std::filesystem::path& path, const std::vector<EpochLog>& log);

}  // namespace pavsgg::pipeline
