#include <algorithm>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <optional>
#include <random>

#include "pavsgg/parallel.hpp"
#include "pavsgg/pipeline.hpp"

namespace pavsgg::pipeline {

using diff::Tape;
using diff::Tensor;
using diff::Var;

namespace {

std::map<scene::PairIndex, std::size_t> row_index(const std::vector<scene::PairIndex>& pairs) {
  std::map<scene::PairIndex, std::size_t> m;
  for (std::size_t i = 0; i < pairs.size(); ++i) m.emplace(pairs[i], i);
  return m;
}

void check_inputs(const TrainingSet& data) {
  if (data.clips.empty()) throw scene::DataError("training set is empty");
  if (data.partitions.size() != data.clips.size())
    throw scene::DataError("training set needs one partition per clip");
}

// Shared epoch/step bookkeeping of both training steps. `step_fn` runs the
// forward pass for one clip and returns the loss, or nothing when the clip has
// no usable pairs.
template <typename StepFn>
std::vector<EpochLog> run_epochs(relnet::RelationModel& model, std::size_t n_clips,
                                 const TrainConfig& cfg, StepFn&& step_fn) {
  std::mt19937_64 order_rng(cfg.seed);
  const std::int64_t total = static_cast<std::int64_t>(n_clips) * cfg.epochs;
  std::int64_t step = 0;
  std::vector<EpochLog> log;
  std::vector<std::size_t> order(n_clips);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), order_rng);
    EpochLog entry;
    entry.epoch = epoch;
    std::size_t used = 0;
    for (auto c : order) {
      const double lr = cosine_lr(cfg.lr, step++, total);
      Tape tape;
      loss::LossValues values;
      auto loss = step_fn(tape, c, values);
      if (!loss) continue;
      model.params().zero_grad();
      diff::backward(tape, *loss, model.params());
      adamw_step(model.params(), cfg, lr);
      entry.loss.rel += values.rel;
      entry.loss.pa += values.pa;
      entry.loss.pam += values.pam;
      entry.loss.total += values.total;
      entry.lr = lr;
      ++used;
    }
    if (used) {
      const double inv = 1.0 / static_cast<double>(used);
      entry.loss.rel *= inv;
      entry.loss.pa *= inv;
      entry.loss.pam *= inv;
      entry.loss.total *= inv;
    }
    log.push_back(entry);
  }
  return log;
}

Var pa_loss(const Var& pa, const std::vector<std::size_t>& pos, const std::vector<std::size_t>& neg,
            const std::vector<double>& targets, loss::PaBceMode mode) {
  return mode == loss::PaBceMode::Balanced ? loss::pa_balanced(pa, pos, neg, targets)
                                           : loss::pa_standard(pa, pos, neg, targets);
}

Var mean_of(Tape& tape, const std::vector<Var>& terms) {
  if (terms.empty()) return tape.constant(Tensor::scalar(0.0));
  Var acc = terms[0];
  for (std::size_t i = 1; i < terms.size(); ++i) acc = acc + terms[i];
  return diff::scale(acc, 1.0 / static_cast<double>(terms.size()));
}

}  // namespace

TrainResult train_step1(const TrainingSet& data, const relnet::ModelConfig& model_cfg,
                        const loss::LossConfig& loss_cfg, const TrainConfig& train_cfg,
                        int subject_class) {
  check_inputs(data);
  model_cfg.validate();
  loss_cfg.validate();
  train_cfg.validate();
  relnet::RelationModel model(model_cfg);
  std::mt19937_64 triplet_rng(train_cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  const auto mode = loss_cfg.margin_mode == loss::MarginMode::Soft ? loss::MarginMode::Soft
                                                                   : loss::MarginMode::Hard;
  const std::size_t n_pred = static_cast<std::size_t>(model_cfg.num_predicates);

  auto log = run_epochs(model, data.clips.size(), train_cfg,
                        [&](Tape& tape, std::size_t c, loss::LossValues& values) -> std::optional<Var> {
    const auto& clip = *data.clips[c];
    const auto& part = data.partitions[c];
    relnet::FrameInput input{&clip.middle(), scene::enumerate_pairs(clip.middle(), subject_class)};
    if (input.pairs.empty()) return std::nullopt;
    auto out = model.forward(tape, std::span(&input, 1), model_cfg.pam);
    const auto rows = row_index(input.pairs);

    std::vector<std::size_t> pos, neg;
    std::vector<double> rel_targets;
    for (const auto& pp : part.positives) {
      pos.push_back(rows.at(pp.pair));
      std::vector<double> y(n_pred, 0.0);
      for (int p : pp.predicates) y.at(static_cast<std::size_t>(p)) = 1.0;
      rel_targets.insert(rel_targets.end(), y.begin(), y.end());
    }
    for (const auto& p : part.negatives) neg.push_back(rows.at(p));
    std::vector<double> pa_targets(input.pairs.size(), 0.0);
    for (auto r : pos) pa_targets[r] = 1.0;

    const auto& fo = out.frames[0];
    loss::LossTerms terms;
    terms.rel = loss::relation(fo.pc, pos, rel_targets);
    terms.pa = pa_loss(fo.pa, pos, neg, pa_targets, loss_cfg.pa_bce);
    std::vector<Var> pam_terms;
    for (const auto& seq : out.sequences) {
      auto triplets = loss::enumerate_triplets(pos, neg, loss_cfg.margin,
                                               static_cast<std::size_t>(loss_cfg.triplet_cap), triplet_rng);
      if (!triplets.empty()) pam_terms.push_back(loss::pam_triplet(seq.gram, triplets, mode));
    }
    terms.pam = mean_of(tape, pam_terms);
    return loss::total(terms, loss_cfg, &values);
  });
  return {std::move(model), std::move(log)};
}

TrainResult train_step2(const TrainingSet& data, const relnet::RelationModel& teacher,
                        const loss::LossConfig& loss_cfg, const TrainConfig& train_cfg,
                        int subject_class) {
  check_inputs(data);
  loss_cfg.validate();
  train_cfg.validate();
  const auto& model_cfg = teacher.config();
  const std::size_t n_pred = static_cast<std::size_t>(model_cfg.num_predicates);
  const auto mode = loss_cfg.margin_mode == loss::MarginMode::Soft ? loss::MarginMode::Soft
                                                                   : loss::MarginMode::Adaptive;

  // Teacher outputs and propagated labels do not change during training.
  std::vector<std::vector<relnet::FramePrediction>> teacher_preds(data.clips.size());
  std::vector<PropagatedLabels> labels(data.clips.size());
  parallel_for(data.clips.size(), [&](std::size_t c) {
    teacher_preds[c] = relnet::predict(teacher, *data.clips[c], subject_class, model_cfg.pam);
    labels[c] = propagate_labels(*data.clips[c], data.partitions[c], subject_class);
  });

  relnet::RelationModel model(model_cfg);
  std::mt19937_64 triplet_rng(train_cfg.seed ^ 0x9e3779b97f4a7c15ULL);

  auto log = run_epochs(model, data.clips.size(), train_cfg,
                        [&](Tape& tape, std::size_t c, loss::LossValues& values) -> std::optional<Var> {
    const auto& clip = *data.clips[c];
    const auto& tp = teacher_preds[c];
    std::vector<relnet::FrameInput> inputs;
    for (std::size_t f = 0; f < clip.frames.size(); ++f)
      inputs.push_back({&clip.frames[f], tp[f].pairs});
    std::size_t n_total = 0;
    for (const auto& in : inputs) n_total += in.pairs.size();
    if (n_total == 0) return std::nullopt;
    auto out = model.forward(tape, inputs, model_cfg.pam);

    // Pool the pairs of all frames into one index space.
    std::vector<std::size_t> frame_offset(inputs.size(), 0);
    std::vector<Var> pa_parts, pc_parts;
    std::size_t off = 0;
    for (std::size_t f = 0; f < inputs.size(); ++f) {
      frame_offset[f] = off;
      if (out.frames[f].n_pairs == 0) continue;
      pa_parts.push_back(out.frames[f].pa);
      pc_parts.push_back(out.frames[f].pc);
      off += out.frames[f].n_pairs;
    }
    Var pa_all = pa_parts.size() == 1 ? pa_parts[0] : diff::concat(pa_parts, 0);
    Var pc_all = pc_parts.size() == 1 ? pc_parts[0] : diff::concat(pc_parts, 0);

    std::vector<double> y(n_total, 0.0);
    std::vector<std::size_t> pos, neg, rel_rows;
    std::vector<double> rel_targets;
    for (std::size_t f = 0; f < inputs.size(); ++f) {
      if (inputs[f].pairs.empty()) continue;
      const auto& pf = labels[c][f];
      const double w = loss::distance_weight(pf.delta_t, loss_cfg.alpha);
      const auto rows = row_index(inputs[f].pairs);
      std::vector<char> is_pos(inputs[f].pairs.size(), 0);
      for (const auto& pp : pf.partition.positives) {
        const std::size_t r = rows.at(pp.pair);
        is_pos[r] = 1;
        rel_rows.push_back(frame_offset[f] + r);
        for (std::size_t p = 0; p < n_pred; ++p) {
          const double hard = pp.predicates.count(static_cast<int>(p)) ? 1.0 : 0.0;
          rel_targets.push_back(w * hard + (1.0 - w) * tp[f].pc.at(r, p));
        }
      }
      for (std::size_t r = 0; r < inputs[f].pairs.size(); ++r) {
        const std::size_t g = frame_offset[f] + r;
        y[g] = loss::soft_pa_target(is_pos[r] ? 1.0 : 0.0, tp[f].pa[r], pf.delta_t, loss_cfg.alpha);
        (is_pos[r] ? pos : neg).push_back(g);
      }
    }

    loss::LossTerms terms;
    terms.rel = loss::relation(pc_all, rel_rows, rel_targets);
    terms.pa = pa_loss(pa_all, pos, neg, y, loss_cfg.pa_bce);

    std::vector<Var> pam_terms;
    for (const auto& seq : out.sequences) {
      std::vector<std::size_t> spos, sneg;
      std::vector<double> sy;
      for (std::size_t k = 0; k < seq.frames.size(); ++k) {
        const std::size_t f = seq.frames[k];
        for (std::size_t r = 0; r < inputs[f].pairs.size(); ++r) {
          const double v = y[frame_offset[f] + r];
          sy.push_back(v);
          (v > 0.5 ? spos : sneg).push_back(seq.offsets[k] + r);
        }
      }
      auto triplets = loss::enumerate_triplets(spos, sneg, loss_cfg.margin,
                                               static_cast<std::size_t>(loss_cfg.triplet_cap), triplet_rng);
      if (mode == loss::MarginMode::Adaptive)
        for (auto& t : triplets) t.margin = loss::adaptive_margin(loss_cfg.margin, sy[t.positive], sy[t.negative]);
      if (!triplets.empty()) pam_terms.push_back(loss::pam_triplet(seq.gram, triplets, mode));
    }
    terms.pam = mean_of(tape, pam_terms);
    return loss::total(terms, loss_cfg, &values);
  });
  return {std::move(model), std::move(log)};
}

void write_log_csv(const std::filesystem::path& path, const std::vector<EpochLog>& log) {
  std::ofstream os(path);
  if (!os) throw scene::DataError("cannot write " + path.string());
  os << "epoch,L_rel,L_PA,L_PAM,total,lr\n" << std::setprecision(10);
  for (const auto& e : log)
    os << e.epoch << ',' << e.loss.rel << ',' << e.loss.pa << ',' << e.loss.pam << ',' << e.loss.total << ','
       << e.lr << '\n';
}

}  // namespace pavsgg::pipeline
