#include "pavsgg/relnet.hpp"

#include <cmath>
#include <random>

#include "pavsgg/config.hpp"
#include "pavsgg/dataset_io.hpp"

namespace pavsgg::relnet {

using diff::Shape;
using diff::Tape;
using diff::Tensor;
using diff::Var;

void ModelConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("model config: " + what); };
  for (int d : {d_v, d_c, d_r, d_p, d_k, layers, num_predicates, num_classes, temporal_window})
    if (d < 1) fail("all dimensions must be >= 1");
  if (d_r != 3 * d_v + 2 * d_c) fail("d_r must equal 3*d_v + 2*d_c");
}

std::vector<double> build_pair_representation(const scene::Detection& subject,
                                              const scene::Detection& object,
                                              const std::vector<double>& union_feature,
                                              const Tensor& class_embeddings) {
  const std::size_t dv = subject.feature.size();
  if (object.feature.size() != dv || union_feature.size() != dv) {
    throw diff::ShapeError("pair representation: feature lengths " + std::to_string(dv) + ", " +
                           std::to_string(object.feature.size()) + ", " +
                           std::to_string(union_feature.size()) + " differ");
  }
  if (class_embeddings.rank() != 2) throw diff::ShapeError("class embeddings must be a matrix");
  const std::size_t dc = class_embeddings.dim(1);
  std::vector<double> row;
  row.reserve(3 * dv + 2 * dc);
  row.insert(row.end(), subject.feature.begin(), subject.feature.end());
  row.insert(row.end(), object.feature.begin(), object.feature.end());
  row.insert(row.end(), union_feature.begin(), union_feature.end());
  for (int cls : {subject.class_id, object.class_id}) {
    if (cls < 0 || static_cast<std::size_t>(cls) >= class_embeddings.dim(0))
      throw diff::ShapeError("class id outside embedding table");
    for (std::size_t c = 0; c < dc; ++c) row.push_back(class_embeddings.at(static_cast<std::size_t>(cls), c));
  }
  return row;
}

namespace {

Tensor xavier(std::size_t in, std::size_t out, std::mt19937_64& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(in + out));
  std::uniform_real_distribution<double> u(-a, a);
  Tensor t(Shape{in, out});
  for (auto& v : t.data()) v = u(rng);
  return t;
}

}  // namespace

RelationModel::RelationModel(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  std::mt19937_64 rng(cfg_.seed);
  const auto dr = static_cast<std::size_t>(cfg_.d_r), dp = static_cast<std::size_t>(cfg_.d_p),
             dk = static_cast<std::size_t>(cfg_.d_k);
  auto add_linear = [&](const std::string& name, std::size_t in, std::size_t out) {
    params_.add(name + ".w", xavier(in, out, rng));
    params_.add(name + ".b", Tensor(Shape{1, out}));
  };

  {
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    Tensor emb(Shape{static_cast<std::size_t>(cfg_.num_classes), static_cast<std::size_t>(cfg_.d_c)});
    for (auto& v : emb.data()) v = u(rng);
    params_.add("class_embedding", std::move(emb));
  }
  add_linear("init.0", dr, dp);
  add_linear("init.1", dp, dp);
  for (int l = 0; l < cfg_.layers; ++l) {
    for (const char* kind : {"spatial", "temporal"}) {
      const std::string b = "L" + std::to_string(l) + "." + kind;
      params_.add(b + ".wq", xavier(dr, dk, rng));
      params_.add(b + ".wk", xavier(dr, dk, rng));
      params_.add(b + ".wv", xavier(dr, dr, rng));
      add_linear(b + ".ffn.0", dr, 2 * dr);
      add_linear(b + ".ffn.1", 2 * dr, dr);
      add_linear(b + ".upd.0", dr, dp);
      add_linear(b + ".upd.1", dp, dp);
    }
  }
  add_linear("pc", dr, static_cast<std::size_t>(cfg_.num_predicates));
  add_linear("pa.0", dp, dp);
  add_linear("pa.1", dp, 1);
}

void RelationModel::zero_heads() {
  for (const char* name : {"pc.w", "pc.b", "pa.0.w", "pa.0.b", "pa.1.w", "pa.1.b"})
    params_.get(name).value.fill(0.0);
}

Var RelationModel::param(Tape& tape, const std::string& name) const {
  return tape.param(params_.get(name));
}

Var RelationModel::linear(Tape& tape, const Var& x, const std::string& prefix) const {
  const std::size_t n = x.value().dim(0);
  Var ones = tape.constant(Tensor(Shape{n, 1}, 1.0));
  return diff::matmul(x, param(tape, prefix + ".w")) +
         diff::matmul(ones, param(tape, prefix + ".b"));
}

Var RelationModel::initial_relation(Tape& tape, const FrameInput& input) const {
  const auto& frame = *input.frame;
  const std::size_t n = input.pairs.size();
  const auto dv = static_cast<std::size_t>(cfg_.d_v);
  Tensor visual(Shape{n, 3 * dv});
  std::vector<std::size_t> subj_cls(n), obj_cls(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = frame.detection(input.pairs[i].subject);
    const auto& o = frame.detection(input.pairs[i].object);
    if (s.feature.size() != dv || o.feature.size() != dv) {
      throw diff::ShapeError("detection feature length " + std::to_string(s.feature.size()) +
                             " does not match d_v=" + std::to_string(dv));
    }
    for (std::size_t c = 0; c < dv; ++c) {
      visual.at(i, c) = s.feature[c];
      visual.at(i, dv + c) = o.feature[c];
      visual.at(i, 2 * dv + c) = std::max(s.feature[c], o.feature[c]);
    }
    subj_cls[i] = static_cast<std::size_t>(s.class_id);
    obj_cls[i] = static_cast<std::size_t>(o.class_id);
  }
  Var emb = param(tape, "class_embedding");
  const Var parts[] = {tape.constant(std::move(visual)), diff::gather_rows(emb, subj_cls),
                       diff::gather_rows(emb, obj_cls)};
  return diff::concat(parts, 1);
}

Var RelationModel::init_pair_affinity(Tape& tape, const Var& r0) const {
  Var h = diff::relu(diff::layer_norm(linear(tape, r0, "init.0"), 1));
  return linear(tape, h, "init.1");
}

BlockOutput RelationModel::gated_attention_block(Tape& tape, const std::string& block,
                                                 const Var& relation, const Var& affinity,
                                                 bool pam) const {
  Var q = diff::matmul(relation, param(tape, block + ".wq"));
  Var k = diff::matmul(relation, param(tape, block + ".wk"));
  Var v = diff::matmul(relation, param(tape, block + ".wv"));
  Var logits = diff::scale(diff::matmul(q, diff::transpose(k)), 1.0 / std::sqrt(cfg_.d_k));
  Var gram = diff::matmul(affinity, diff::transpose(affinity));
  if (pam) logits = logits * diff::sigmoid(gram);
  Var weights = diff::softmax(logits, 1);
  Var attn = diff::matmul(weights, v);

  Var ffn = linear(tape, diff::relu(linear(tape, relation + attn, block + ".ffn.0")), block + ".ffn.1");
  Var next_relation = diff::layer_norm(relation + ffn, 1);
  Var update = linear(tape, diff::relu(linear(tape, attn, block + ".upd.0")), block + ".upd.1");
  Var next_affinity = affinity + update;
  return {next_relation, next_affinity, gram, weights};
}

ForwardOutput RelationModel::forward(Tape& tape, std::span<const FrameInput> inputs, bool pam) const {
  ForwardOutput out;
  out.frames.resize(inputs.size());
  std::vector<std::size_t> active;
  for (std::size_t i = 0; i < inputs.size(); ++i)
    if (!inputs[i].pairs.empty()) active.push_back(i);
  if (active.empty()) return out;

  std::vector<Var> rel(inputs.size()), aff(inputs.size());
  for (auto i : active) {
    rel[i] = initial_relation(tape, inputs[i]);
    aff[i] = init_pair_affinity(tape, rel[i]);
  }

  const std::size_t window = static_cast<std::size_t>(cfg_.temporal_window);
  std::vector<std::vector<std::size_t>> windows;
  if (active.size() <= window) {
    windows.push_back(active);
  } else {
    for (std::size_t s = 0; s + window <= active.size(); ++s)
      windows.emplace_back(active.begin() + static_cast<std::ptrdiff_t>(s),
                           active.begin() + static_cast<std::ptrdiff_t>(s + window));
  }

  for (int l = 0; l < cfg_.layers; ++l) {
    const std::string prefix = "L" + std::to_string(l);
    for (auto i : active) {
      auto b = gated_attention_block(tape, prefix + ".spatial", rel[i], aff[i], pam);
      rel[i] = b.relation;
      aff[i] = b.affinity;
    }

    std::vector<std::vector<Var>> rel_parts(inputs.size()), aff_parts(inputs.size());
    const bool last = l + 1 == cfg_.layers;
    for (const auto& w : windows) {
      std::vector<Var> rs, ps;
      std::vector<std::size_t> offsets;
      std::size_t off = 0;
      for (auto i : w) {
        rs.push_back(rel[i]);
        ps.push_back(aff[i]);
        offsets.push_back(off);
        off += inputs[i].pairs.size();
      }
      auto b = gated_attention_block(tape, prefix + ".temporal", diff::concat(rs, 0),
                                     diff::concat(ps, 0), pam);
      for (std::size_t k = 0; k < w.size(); ++k) {
        const std::size_t n = inputs[w[k]].pairs.size();
        rel_parts[w[k]].push_back(diff::slice(b.relation, 0, offsets[k], n));
        aff_parts[w[k]].push_back(diff::slice(b.affinity, 0, offsets[k], n));
      }
      if (last) out.sequences.push_back({b.gram, w, offsets});
    }
    for (auto i : active) {
      auto average = [](const std::vector<Var>& parts) {
        Var acc = parts[0];
        for (std::size_t k = 1; k < parts.size(); ++k) acc = acc + parts[k];
        return parts.size() == 1 ? acc : diff::scale(acc, 1.0 / static_cast<double>(parts.size()));
      };
      rel[i] = average(rel_parts[i]);
      aff[i] = average(aff_parts[i]);
    }
  }

  for (auto i : active) {
    const std::size_t n = inputs[i].pairs.size();
    Var pc = diff::sigmoid(linear(tape, rel[i], "pc"));
    Var pa_logit = linear(tape, diff::relu(linear(tape, aff[i], "pa.0")), "pa.1");
    Var pa = diff::sigmoid(diff::reshape(pa_logit, Shape{n}));
    out.frames[i] = {n, pc, pa};
  }
  return out;
}

std::vector<FramePrediction> predict(const RelationModel& model, const scene::VideoClip& clip,
                                     int subject_class, bool pam) {
  std::vector<FrameInput> inputs;
  for (const auto& f : clip.frames) inputs.push_back({&f, scene::enumerate_pairs(f, subject_class)});
  Tape tape;
  auto out = model.forward(tape, inputs, pam);
  std::vector<FramePrediction> preds(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    preds[i].pairs = inputs[i].pairs;
    if (out.frames[i].n_pairs == 0) {
      preds[i].pc = Tensor(Shape{0, static_cast<std::size_t>(model.config().num_predicates)});
      continue;
    }
    preds[i].pc = out.frames[i].pc.value();
    preds[i].pa = out.frames[i].pa.value().values();
  }
  return preds;
}

void save_model(const std::filesystem::path& dir, const RelationModel& model) {
  std::filesystem::create_directories(dir);
  io::write_json_file(dir / "model_config.json", config::to_json(model.config()));
  diff::save_checkpoint(dir, model.params());
}

RelationModel load_model(const std::filesystem::path& dir) {
  ModelConfig cfg;
  try {
    cfg = config::model_config_from_json(io::read_json_file(dir / "model_config.json"));
  } catch (const scene::DataError& e) {
    throw diff::CheckpointError(e.what());
  }
  RelationModel model(cfg);
  diff::load_checkpoint(dir, model.params());
  return model;
}

}  // namespace pavsgg::relnet
