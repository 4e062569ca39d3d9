#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pavsgg/diff/ops.hpp"
#include "pavsgg/diff/params.hpp"
#include "pavsgg/scene.hpp"

namespace pavsgg::relnet {

struct ModelConfig {
  int d_v = 32;
  int d_c = 8;
  int d_r = 112;  // 3 * d_v + 2 * d_c
  int d_p = 16;
  int d_k = 32;
  int layers = 2;
  int num_predicates = 6;
  int num_classes = 10;
  int temporal_window = 2;
  bool pam = true;
  std::uint64_t seed = 7;

  void validate() const;
};

// [subject | object | union | emb(subject class) | emb(object class)].
// `class_embeddings` is num_classes x d_c.
std::vector<double> build_pair_representation(const scene::Detection& subject,
                                              const scene::Detection& object,
                                              const std::vector<double>& union_feature,
                                              const diff::Tensor& class_embeddings);

struct FrameInput {
  const scene::Frame* frame = nullptr;
  std::vector<scene::PairIndex> pairs;
};

struct FrameOutput {
  std::size_t n_pairs = 0;
  diff::Var pc;  // n x num_predicates, per-predicate sigmoid
  diff::Var pa;  // {n}, pair affinity
};

// Final-block attention sequence: rows of input frame `frames[k]` start at
// `offsets[k]` inside `gram`.
struct SequenceOutput {
  diff::Var gram;
  std::vector<std::size_t> frames;
  std::vector<std::size_t> offsets;
};

struct ForwardOutput {
  std::vector<FrameOutput> frames;  // aligned with the inputs
  std::vector<SequenceOutput> sequences;
};

struct BlockOutput {
  diff::Var relation;
  diff::Var affinity;
  diff::Var gram;
  diff::Var attention;  // row-stochastic n x n weights
};

class RelationModel {
 public:
  explicit RelationModel(const ModelConfig& cfg);

  const ModelConfig& config() const { return cfg_; }
  diff::ParamStore& params() { return params_; }
  const diff::ParamStore& params() const { return params_; }

  diff::Var initial_relation(diff::Tape& tape, const FrameInput& input) const;
  // LayerNorm + ReLU between the two projections.
  diff::Var init_pair_affinity(diff::Tape& tape, const diff::Var& r0) const;
  // `block` is a parameter prefix such as "L0.spatial".
  BlockOutput gated_attention_block(diff::Tape& tape, const std::string& block,
                                    const diff::Var& relation, const diff::Var& affinity,
                                    bool pam) const;

  // L x (spatial per frame, temporal over sliding windows of consecutive
  // inputs), then the predicate and affinity heads. Frames with no pairs give
  // empty outputs and are left out of every sequence.
  ForwardOutput forward(diff::Tape& tape, std::span<const FrameInput> inputs, bool pam) const;

  // Sets the predicate and affinity head parameters to zero.
  void zero_heads();

 private:
  diff::Var param(diff::Tape& tape, const std::string& name) const;
  diff::Var linear(diff::Tape& tape, const diff::Var& x, const std::string& prefix) const;

  ModelConfig cfg_;
  diff::ParamStore params_;
};

// Plain-value predictions for every frame of a clip.
struct FramePrediction {
  std::vector<scene::PairIndex> pairs;
  diff::Tensor pc;
  std::vector<double> pa;
};

std::vector<FramePrediction> predict(const RelationModel& model, const scene::VideoClip& clip,
                                     int subject_class, bool pam);

// <dir>/model_config.json plus the diffcore checkpoint files.
void save_model(const std::filesystem::path& dir, const RelationModel& model);
RelationModel load_model(const std::filesystem::path& dir);

}  // namespace pavsgg::relnet
