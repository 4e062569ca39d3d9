#include "pavsgg/gradcheck_suite.hpp"

#include <chrono>
#include <functional>
#include <random>

#include "pavsgg/diff/gradcheck.hpp"
#include "pavsgg/diff/ops.hpp"

namespace pavsgg::gradcheck {

using diff::ParamStore;
using diff::Shape;
using diff::Tape;
using diff::Tensor;
using diff::Var;

bool SuiteReport::passed() const {
  for (const auto& e : entries)
    if (!e.passed) return false;
  return !entries.empty();
}

namespace {

struct PrimitiveCase {
  std::string name;
  // Fills the store with inputs; returns the op output given the store.
  std::function<void(ParamStore&, std::mt19937_64&)> init;
  std::function<Var(Tape&, const ParamStore&)> op;
};

std::size_t dim(std::mt19937_64& rng) { return std::uniform_int_distribution<std::size_t>(1, 8)(rng); }

// Normal draws pushed at least `gap` away from each point in `kinks`.
Tensor random_tensor(Shape shape, std::mt19937_64& rng, std::vector<double> kinks = {}, double gap = 0.02) {
  std::normal_distribution<double> n(0.0, 1.0);
  Tensor t(std::move(shape));
  for (auto& v : t.data()) {
    v = n(rng);
    for (double k : kinks)
      if (std::abs(v - k) < gap) v = k + (v < k ? -gap : gap);
  }
  return t;
}

Var in(Tape& tape, const ParamStore& s, const char* name) { return tape.param(s.get(name)); }

std::vector<PrimitiveCase> primitive_cases() {
  std::vector<PrimitiveCase> c;
  auto unary = [&](std::string name, std::function<Var(const Var&)> f, std::vector<double> kinks = {},
                   bool positive = false) {
    c.push_back({std::move(name),
                 [kinks, positive](ParamStore& s, std::mt19937_64& rng) {
                   Tensor x = random_tensor(Shape{dim(rng), dim(rng)}, rng, kinks);
                   if (positive)
                     for (auto& v : x.data()) v = 0.2 + std::abs(v);
                   s.add("x", std::move(x));
                 },
                 [f](Tape& t, const ParamStore& s) { return f(in(t, s, "x")); }});
  };
  c.push_back({"matmul",
               [](ParamStore& s, std::mt19937_64& rng) {
                 const auto n = dim(rng), k = dim(rng), m = dim(rng);
                 s.add("x", random_tensor(Shape{n, k}, rng));
                 s.add("y", random_tensor(Shape{k, m}, rng));
               },
               [](Tape& t, const ParamStore& s) { return diff::matmul(in(t, s, "x"), in(t, s, "y")); }});
  unary("transpose", [](const Var& x) { return diff::transpose(x); });
  c.push_back({"concat",
               [](ParamStore& s, std::mt19937_64& rng) {
                 const auto n = dim(rng), m = dim(rng);
                 s.add("x", random_tensor(Shape{n, m}, rng));
                 s.add("y", random_tensor(Shape{n, dim(rng)}, rng));
               },
               [](Tape& t, const ParamStore& s) {
                 const Var parts[] = {in(t, s, "x"), in(t, s, "y")};
                 return diff::concat(parts, 1);
               }});
  c.push_back({"slice",
               [](ParamStore& s, std::mt19937_64& rng) { s.add("x", random_tensor(Shape{dim(rng) + 1, dim(rng)}, rng)); },
               [](Tape& t, const ParamStore& s) {
                 Var x = in(t, s, "x");
                 return diff::slice(x, 0, 1, x.value().dim(0) - 1);
               }});
  unary("reshape", [](const Var& x) { return diff::reshape(x, Shape{x.value().numel()}); });
  for (const char* name : {"add", "sub", "mul"}) {
    const std::string op = name;
    c.push_back({op,
                 [](ParamStore& s, std::mt19937_64& rng) {
                   const auto n = dim(rng), m = dim(rng);
                   s.add("x", random_tensor(Shape{n, m}, rng));
                   s.add("y", random_tensor(Shape{n, m}, rng));
                 },
                 [op](Tape& t, const ParamStore& s) {
                   Var x = in(t, s, "x"), y = in(t, s, "y");
                   return op == "add" ? diff::add(x, y) : op == "sub" ? diff::sub(x, y) : diff::mul(x, y);
                 }});
  }
  c.push_back({"mul_scalar_broadcast",
               [](ParamStore& s, std::mt19937_64& rng) {
                 s.add("x", random_tensor(Shape{dim(rng), dim(rng)}, rng));
                 s.add("y", random_tensor(Shape{}, rng));
               },
               [](Tape& t, const ParamStore& s) { return diff::mul(in(t, s, "y"), in(t, s, "x")); }});
  unary("scale", [](const Var& x) { return diff::scale(x, -1.7); });
  unary("add_scalar", [](const Var& x) { return diff::add_scalar(x, 0.3); });
  unary("sum", [](const Var& x) { return diff::sum(x); });
  unary("sum_axis0", [](const Var& x) { return diff::sum(x, 0); });
  unary("sum_axis1", [](const Var& x) { return diff::sum(x, 1); });
  unary("mean", [](const Var& x) { return diff::mean(x); });
  unary("relu", [](const Var& x) { return diff::relu(x); }, {0.0});
  unary("sigmoid", [](const Var& x) { return diff::sigmoid(x); });
  unary("exp", [](const Var& x) { return diff::exp(x); });
  unary("log", [](const Var& x) { return diff::log(x); }, {}, true);
  unary("softplus", [](const Var& x) { return diff::softplus(x); });
  unary("clamp", [](const Var& x) { return diff::clamp(x, -0.5, 0.5); }, {-0.5, 0.5});
  unary("softmax_axis1", [](const Var& x) { return diff::softmax(x, 1); });
  unary("softmax_axis0", [](const Var& x) { return diff::softmax(x, 0); });
  c.push_back({"layer_norm",
               [](ParamStore& s, std::mt19937_64& rng) { s.add("x", random_tensor(Shape{dim(rng), dim(rng) + 1}, rng)); },
               [](Tape& t, const ParamStore& s) { return diff::layer_norm(in(t, s, "x"), 1); }});
  c.push_back({"gather",
               [](ParamStore& s, std::mt19937_64& rng) { s.add("x", random_tensor(Shape{dim(rng), dim(rng)}, rng)); },
               [](Tape& t, const ParamStore& s) {
                 Var x = in(t, s, "x");
                 const std::size_t n = x.value().numel();
                 std::vector<std::size_t> idx;
                 for (std::size_t i = 0; i < 2 * n; i += 3) idx.push_back(i % n);
                 return diff::gather(x, idx);
               }});
  c.push_back({"gather_rows",
               [](ParamStore& s, std::mt19937_64& rng) { s.add("x", random_tensor(Shape{dim(rng), dim(rng)}, rng)); },
               [](Tape& t, const ParamStore& s) {
                 Var x = in(t, s, "x");
                 const std::size_t n = x.value().dim(0);
                 std::vector<std::size_t> rows{n - 1, 0, n / 2, 0};
                 return diff::gather_rows(x, rows);
               }});
  return c;
}

}  // namespace

std::vector<CheckEntry> check_primitives(int seeds, double tolerance, std::uint64_t base_seed) {
  std::vector<CheckEntry> out;
  for (const auto& pc : primitive_cases()) {
    CheckEntry e;
    e.name = pc.name;
    for (int s = 0; s < seeds; ++s) {
      std::mt19937_64 rng(base_seed * 1000003ULL + static_cast<std::uint64_t>(s));
      ParamStore store;
      pc.init(store, rng);
      // Random output weights make every output coordinate matter.
      Tensor w;
      {
        Tape probe;
        w = random_tensor(pc.op(probe, store).shape(), rng);
      }
      auto build = [&](Tape& tape, const ParamStore& st) {
        Var y = pc.op(tape, st);
        return diff::sum(diff::mul(y, tape.constant(w)));
      };
      const auto r = diff::finite_diff_check(build, store);
      e.max_relative_error = std::max(e.max_relative_error, r.max_relative_error);
      e.coordinates += r.coordinates;
    }
    e.passed = e.max_relative_error < tolerance;
    out.push_back(e);
  }
  return out;
}

scene::VideoClip toy_clip() {
  scene::VideoClip clip;
  clip.clip_id = "toy";
  clip.middle_index = 0;
  clip.annotations = {{0, 1, 2}};
  auto det = [](int id, int cls, double x, double conf, std::vector<double> f) {
    scene::Detection d;
    d.id = id;
    d.class_id = cls;
    d.box = {x, 100, x + 80, 200};
    d.confidence = conf;
    d.feature = std::move(f);
    return d;
  };
  scene::Frame f0;
  f0.t = 0;
  f0.detections = {det(0, 0, 100, 0.9, {0.3, -0.2, 0.8, 0.1}), det(1, 2, 200, 0.7, {-0.5, 0.4, 0.2, 0.9}),
                   det(2, 1, 320, 0.6, {0.7, 0.1, -0.3, -0.6})};
  f0.oracle_gt = std::vector<scene::GroundTruthTriplet>{};
  scene::Frame f1;
  f1.t = 1;
  f1.detections = {det(0, 0, 104, 0.85, {0.25, -0.1, 0.75, 0.2}), det(1, 2, 205, 0.75, {-0.45, 0.5, 0.1, 0.8})};
  f1.oracle_gt = std::vector<scene::GroundTruthTriplet>{};
  clip.frames = {f0, f1};
  return clip;
}

relnet::ModelConfig toy_model_config() {
  relnet::ModelConfig m;
  m.d_v = 4;
  m.d_c = 2;
  m.d_r = 16;
  m.d_p = 4;
  m.d_k = 4;
  m.layers = 2;
  m.num_predicates = 3;
  m.num_classes = 3;
  m.temporal_window = 2;
  m.pam = true;
  m.seed = 5;
  return m;
}

CheckEntry check_end_to_end(double tolerance, const loss::LossConfig& loss_cfg) {
  const auto clip = toy_clip();
  relnet::RelationModel model(toy_model_config());
  // Frame 0 holds pairs (0,1) labeled and (0,2) unlabeled; frame 1 holds (0,1) labeled.
  // The checker perturbs model.params() in place, so the builder reads the
  // model directly.
  auto build = [&](Tape& tape, const ParamStore&) {
    std::vector<relnet::FrameInput> inputs{{&clip.frames[0], {{0, 1}, {0, 2}}}, {&clip.frames[1], {{0, 1}}}};
    auto out = model.forward(tape, inputs, true);
    const Var pa_parts[] = {out.frames[0].pa, out.frames[1].pa};
    const Var pc_parts[] = {out.frames[0].pc, out.frames[1].pc};
    Var pa = diff::concat(pa_parts, 0);
    Var pc = diff::concat(pc_parts, 0);
    const std::vector<std::size_t> pos{0, 2}, neg{1};
    loss::LossTerms terms;
    terms.rel = loss::relation(pc, pos, std::vector<double>{0, 1, 0, 0, 1, 1});
    terms.pa = loss::pa_balanced(pa, pos, neg);
    const std::vector<loss::Triplet> triplets{{0, 2, 1, loss_cfg.margin}, {2, 0, 1, loss_cfg.margin}};
    terms.pam = loss::pam_triplet(out.sequences.at(0).gram, triplets, loss::MarginMode::Hard);
    return loss::total(terms, loss_cfg);
  };
  const auto r = diff::finite_diff_check(build, model.params());
  CheckEntry e{"end_to_end_total_loss", r.max_relative_error, r.coordinates, r.max_relative_error < tolerance};
  return e;
}

SuiteReport run_suite(int seeds, double tolerance) {
  const auto t0 = std::chrono::steady_clock::now();
  SuiteReport rep;
  rep.tolerance = tolerance;
  rep.entries = check_primitives(seeds, tolerance);
  rep.entries.push_back(check_end_to_end(tolerance));
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

}  // namespace pavsgg::gradcheck
