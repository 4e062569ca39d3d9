#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>
#include <set>

#include "cli_support.hpp"
#include "pavsgg/attention.hpp"
#include "pavsgg/dataset_io.hpp"
#include "pavsgg/evalrank.hpp"
#include "pavsgg/diff/gradcheck.hpp"
#include "pavsgg/diff/ops.hpp"
#include "pavsgg/gradcheck_suite.hpp"
#include "pavsgg/losses.hpp"
#include "pavsgg/pipeline.hpp"
#include "pavsgg/ram.hpp"
#include "pavsgg/relnet.hpp"
#include "test_support.hpp"

using namespace pavsgg;
using diff::Tape;
using diff::Tensor;

namespace {

constexpr int kCases = 100;

std::mt19937_64 rng_for(int test, int c) { return std::mt19937_64(static_cast<std::uint64_t>(test) * 1000003u + c); }

double uniform(std::mt19937_64& rng, double lo = 0.0, double hi = 1.0) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

int uniform_int(std::mt19937_64& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

Tensor random_tensor(std::mt19937_64& rng, std::size_t r, std::size_t c, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Tensor t(diff::Shape{r, c});
  for (auto& v : t.values()) v = n(rng);
  return t;
}

scene::AttentionMap random_map(std::mt19937_64& rng, int h, int w, double sparsity = 0.5) {
  scene::AttentionMap m(h, w);
  for (auto& v : m.values()) v = uniform(rng) < sparsity ? 0.0 : uniform(rng);
  m.values()[static_cast<std::size_t>(uniform_int(rng, 0, h * w - 1))] += 0.5;
  return m;
}

// Small generator settings that pair with the toy model dimensions below.
scene::GenConfig tiny_gen() {
  scene::GenConfig g;
  g.clips = 2;
  g.frames_per_clip = 3;
  g.interactive_triplets = 1;
  g.distractors_per_frame = 2;
  g.num_classes = 4;
  g.num_predicates = 3;
  g.feature_dim = 6;
  return g;
}

relnet::ModelConfig tiny_model(std::uint64_t seed) {
  relnet::ModelConfig m;
  m.d_v = 6;
  m.d_c = 2;
  m.d_r = 22;
  m.d_p = 4;
  m.d_k = 4;
  m.num_predicates = 3;
  m.num_classes = 4;
  m.seed = seed;
  return m;
}

scene::Frame random_frame(std::mt19937_64& rng, int n_det, int n_classes, int d_v) {
  scene::Frame f;
  for (int i = 0; i < n_det; ++i) {
    auto d = fixtures::make_detection(i, i == 0 ? 0 : uniform_int(rng, 0, n_classes - 1), fixtures::random_box(rng, 512, 8),
                                     uniform(rng, 0.05, 1.0));
    for (int k = 0; k < d_v; ++k) d.feature.push_back(uniform(rng, -1, 1));
    f.detections.push_back(d);
  }
  return f;
}

}  // namespace

// ---- scene model ----

TEST(SceneProperties, IouSymmetricAndSelfOne) {
  for (int c = 0; c < kCases; ++c) {
    auto rng = rng_for(1, c);
    const auto a = fixtures::random_box(rng), b = fixtures::random_box(rng);
    EXPECT_EQ(scene::iou(a, b), scene::iou(b, a));
    EXPECT_EQ(scene::iou(a, a), 1.0);
    const double v = scene::iou(a, b);
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(SceneProperties, IouMatchesRasterOracleOnIntegerBoxes) {
  for (int c = 0; c < kCases; ++c) {
    auto rng = rng_for(2, c);
    const auto a = fixtures::random_int_box(rng), b = fixtures::random_int_box(rng);
    EXPECT_NEAR(scene::iou(a, b), fixtures::raster_iou(a, b), 1e-12);
  }
}

TEST(SceneProperties, GenerationReproducible) {
  scene::GenConfig cfg;
  cfg.frames_per_clip = 3;
  for (int c = 0; c < kCases; ++c) {
    const auto seed = scene::clip_seed_for(99, static_cast<std::size_t>(c));
    EXPECT_EQ(scene::generate_clip(cfg, seed), scene::generate_clip(cfg, seed));
  }
}

TEST(SceneProperties, AnnotationsHaveMiddleFrameInstances) {
  scene::GenConfig cfg;
  for (int c = 0; c < kCases; ++c) {
    auto rng = rng_for(3, c);
    cfg.interactive_triplets = uniform_int(rng, 1, 3);
    cfg.distractors_per_frame = uniform_int(rng, 0, 12);
    const auto clip = scene::generate_clip(cfg, static_cast<std::uint64_t>(c));
    const auto& mid = clip.middle();
    ASSERT_FALSE(clip.annotations.empty());
    for (const auto& a : clip.annotations) {
      bool found = false;
      for (const auto& gt : *mid.oracle_gt)
        found |= gt.subject.class_id == a.subject_class && gt.object.class_id == a.object_class && gt.predicate == a.predicate;
      EXPECT_TRUE(found);
      const auto has = [&](int cls) {
        return std::any_of(mid.detections.begin(), mid.detections.end(), [&](const auto& d) { return d.class_id == cls; });
      };
      EXPECT_TRUE(has(a.subject_class));
      EXPECT_TRUE(has(a.object_class));
    }
  }
}

TEST(SceneProperties, AttentionNonnegativeWithPositiveCell) {
  scene::GenConfig cfg;
  for (int c = 0; c < kCases; ++c) {
    auto rng = rng_for(4, c);
    const auto clip = scene::generate_clip(cfg, static_cast<std::uint64_t>(c));
    auto trip = clip.annotations[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(clip.annotations.size()) - 1))];
    if (c % 5 == 0) trip.object_class = cfg.num_classes + 3;  // absent class
    const auto side = c % 2 ? scene::EntitySide::Subject : scene::EntitySide::Object;
    const auto m = scene::synthesize_attention(clip.middle(), trip, side, uniform(rng), rng());
    EXPECT_TRUE(std::all_of(m.values().begin(), m.values().end(), [](double v) { return v >= 0.0 && std::isfinite(v); }));
    EXPECT_TRUE(std::any_of(m.values().begin(), m.values().end(), [](double v) { return v > 0.0; }));
  }
}

// ---- relation-aware matching ----

TEST(RamProperties, ReliabilityRangeAndSingleCell) {
  for (int c = 0; c < kCases; ++c) {
    auto rng = rng_for(5, c);
    const int h = uniform_int(rng, 1, 16), w = uniform_int(rng, 1, 16);
    scene::AttentionMap m(h, w);
    const int k = uniform_int(rng, 1, std::min(4, h * w));
    std::set<int> cells;
    while (static_cast<int>(cells.size()) < k) cells.insert(uniform_int(rng, 0, h * w - 1));
    for (int cell : cells) m.values()[static_cast<std::size_t>(cell)] = uniform(rng, 0.01, 5.0);
    const double r = ram::reliability(m).r;
    EXPECT_GT(r, 0.0);
    EXPECT_LE(r, 1.0);
    if (k == 1) {
      EXPECT_EQ(r, 1.0);
    } else {
      EXPECT_LT(r, 1.0);
    }
  }
}

TEST(RamProperties, ReliabilityScaleInvariant) {
  for (int c = 0; c < kCases; ++c) {
    auto rng = rng_for(6, c);
    auto m = random_map(rng, 12, 9);
    const double r = ram::reliability(m).r;
    const double s = std::exp(uniform(rng, -5, 5));
    for (auto& v : m.values()) v *= s;
    EXPECT_NEAR(ram::reliability(m).r, r, 1e-12);
  }
}

TEST(RamProperties, ConcentrationSumsToOneOverBoxPartition) {
  for (int c = 0; c < kCases; ++c) {
    auto rng = rng_for(7, c);
    const auto m = random_map(rng, 32, 32);
    // Cuts on cell boundaries (cell size 16 px) tile the image with disjoint boxes.
    auto cuts = [&]() {
      std::set<int> s{0, 32};
      const int n = uniform_int(rng, 0, 5);
      for (int i = 0; i < n; ++i) s.insert(uniform_int(rng, 1, 31));
      return std::vector<int>(s.begin(), s.end());
    };
    const auto xs = cuts(), ys = cuts();
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < xs.size(); ++i)
      for (std::size_t j = 0; j + 1 < ys.size(); ++j)
        total += ram::concentration(m, {16.0 * xs[i], 16.0 * ys[j], 16.0 * xs[i + 1], 16.0 * ys[j + 1]});
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(RamProperties, GroundingScoreRangeAndMonotone) {
  for (int c = 0; c < kCases; ++c) {
    auto rng = rng_for(8, c);
    auto m = random_map(rng, 16, 16);
    const scene::BoundingBox box{32.0 * uniform_int(rng, 0, 7), 32.0 * uniform_int(rng, 0, 7), 0, 0};
    const scene::BoundingBox b{box.x1, box.y1, box.x1 + 32.0 * uniform_int(rng, 1, 8), box.y1 + 32.0 * uniform_int(rng, 1, 8)};
    const double gs = ram::grounding_score(m, b);
    EXPECT_GE(gs, 0.0);
    EXPECT_LT(gs, 1.0);
    const auto cells = scene::cells_in_box(16, 16, b);
    ASSERT_FALSE(cells.empty());
    m.values()[cells[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(cells.size()) - 1))]] += uniform(rng, 0.01, 3.0);
    EXPECT_GE(ram::grounding_score(m, b), gs);
  }
}

namespace {

struct Corpus {
  io::Dataset data;
  Corpus() {
    scene::GenConfig g;
    g.clips = kCases;
    g.duplicate_instance = 0.5;
    data = io::generate_dataset(g);
  }
};

const io::Dataset& corpus() {
  static const Corpus c;
  return c.data;
}

}  // namespace

TEST(RamProperties, DisabledEqualsClassLevel) {
  ram::RamConfig off;
  off.enabled = false;
  for (const auto& clip : corpus().clips) {
    std::vector<ram::EntityDecisions> dec;
    for (const auto& a : clip.annotations)
      dec.push_back({ram::match_entity_by_class(a.subject_class, clip.middle().detections),
                     ram::match_entity_by_class(a.object_class, clip.middle().detections)});
    EXPECT_EQ(ram::match_clip(clip, corpus().attention, off), ram::build_partition(clip, dec, clip.middle_index));
  }
}

TEST(RamProperties, RamNarrowsPositives) {
  int c = 0;
  for (const auto& clip : corpus().clips) {
    auto rng = rng_for(9, c++);
    ram::RamConfig on, off;
    on.tau_r = uniform(rng);
    on.tau_gs = uniform(rng, 0.0, 0.9);
    off.enabled = false;
    const auto a = ram::match_clip(clip, corpus().attention, on);
    const auto b = ram::match_clip(clip, corpus().attention, off);
    EXPECT_LE(a.positives.size(), b.positives.size());
  }
}

TEST(RamProperties, MatchCountMonotoneInGsThreshold) {
  for (const auto& clip : corpus().clips) {
    std::size_t prev = std::numeric_limits<std::size_t>::max();
    for (double tau : {0.0, 0.05, 0.1, 0.2, 0.3, 0.5, 0.8, 0.99}) {
      ram::RamConfig cfg;
      cfg.tau_gs = tau;
      const auto n = ram::match_clip(clip, corpus().attention, cfg).positives.size();
      EXPECT_LE(n, prev);
      prev = n;
    }
  }
}

TEST(RamProperties, PartitionCoversEnumerationOnce) {
  int c = 0;
  for (const auto& clip : corpus().clips) {
    auto rng = rng_for(10, c++);
    ram::RamConfig cfg;
    cfg.tau_r = uniform(rng);
    cfg.tau_gs = uniform(rng, 0.0, 0.5);
    cfg.enabled = uniform(rng) < 0.7;
    const auto p = ram::match_clip(clip, corpus().attention, cfg);
    std::vector<scene::PairIndex> all;
    for (const auto& pp : p.positives) all.push_back(pp.pair);
    all.insert(all.end(), p.negatives.begin(), p.negatives.end());
    std::sort(all.begin(), all.end());
    EXPECT_EQ(std::adjacent_find(all.begin(), all.end()), all.end());
    EXPECT_EQ(all, scene::enumerate_pairs(clip.middle()));
  }
}

// ---- differentiation core ----

TEST(DiffProperties, PrimitiveGradcheckTenSeeds) {
  const auto entries = gradcheck::check_primitives(10, 1e-5);
  ASSERT_FALSE(entries.empty());
  for (const auto& e : entries) EXPECT_TRUE(e.passed) << e.name << " " << e.max_relative_error;
}

TEST(DiffProperties, BackwardBitDeterministic) {
  for (int c = 0; c < kCases; ++c) {
    auto rng = rng_for(11, c);
    const std::size_t n = static_cast<std::size_t>(uniform_int(rng, 1, 8)), d = static_cast<std::size_t>(uniform_int(rng, 1, 8));
    diff::ParamStore store;
    store.add("w", random_tensor(rng, d, d));
    store.add("v", random_tensor(rng, d, 1));
    const Tensor x = random_tensor(rng, n, d);
    auto run = [&]() {
      store.zero_grad();
      Tape tape;
      auto h = diff::layer_norm(diff::relu(diff::matmul(tape.constant(x), tape.param(store.get("w")))), 1);
      auto s = diff::softmax(diff::matmul(h, diff::transpose(h)), 1);
      auto loss = diff::mean(diff::sigmoid(diff::matmul(diff::matmul(s, h), tape.param(store.get("v")))));
      diff::backward(tape, loss, store);
      return std::make_pair(store.get("w").grad, store.get("v").grad);
    };
    EXPECT_EQ(run(), run());
  }
}

TEST(DiffProperties, SoftmaxRowsSumToOne) {
  for (int c = 0; c < kCases; ++c) {
    auto rng = rng_for(12, c);
    const auto t = random_tensor(rng, static_cast<std::size_t>(uniform_int(rng, 1, 8)), static_cast<std::size_t>(uniform_int(rng, 1, 8)),
                                 std::exp(uniform(rng, -2, 6)));
    Tape tape;
    const auto s = diff::softmax(tape.constant(t), 1).value();
    for (std::size_t i = 0; i < s.dim(0); ++i) {
      double sum = 0.0;
      for (std::size_t j = 0; j < s.dim(1); ++j) sum += s.at(i, j);
      EXPECT_NEAR(sum, 1.0, 1e-12);
    }
  }
}

// ---- relation network ----

namespace {

bool is_psd(const Tensor& g) {
  const auto n = static_cast<Eigen::Index>(g.dim(0));
  Eigen::MatrixXd m(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      if (g.at(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) != g.at(static_cast<std::size_t>(j), static_cast<std::size_t>(i))) return false;
      m(i, j) = g.at(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
    }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  return es.eigenvalues().minCoeff() >= -1e-9 * std::max(1.0, m.cwiseAbs().maxCoeff());
}

}  // namespace

TEST(RelnetProperties, GramSymmetricPsdEveryLayer) {
  for (int c = 0; c < kCases; ++c) {
    auto rng = rng_for(13, c);
    relnet::RelationModel model(tiny_model(static_cast<std::uint64_t>(c)));
    const std::size_t n = static_cast<std::size_t>(uniform_int(rng, 1, 8));
    Tape tape;
    auto r = tape.constant(random_tensor(rng, n, 22));
    auto p = tape.constant(random_tensor(rng, n, 4, 2.0));
    for (const char* block : {"L0.spatial", "L0.temporal", "L1.spatial", "L1.temporal"}) {
      auto out = model.gated_attention_block(tape, block, r, p, true);
      EXPECT_TRUE(is_psd(out.gram.value())) << block;
      r = out.relation;
      p = out.affinity;
    }
  }
}

TEST(RelnetProperties, AttentionRowsSumToOne) {
  for (int c = 0; c < kCases; ++c) {
    auto rng = rng_for(14, c);
    relnet::RelationModel model(tiny_model(static_cast<std::uint64_t>(c)));
    const std::size_t n = static_cast<std::size_t>(uniform_int(rng, 1, 8));
    Tape tape;
    auto r = tape.constant(random_tensor(rng, n, 22, 3.0));
    auto p = tape.constant(random_tensor(rng, n, 4, 4.0));
    for (bool pam : {true, false}) {
      const auto w = model.gated_attention_block(tape, "L0.spatial", r, p, pam).attention.value();
      for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += w.at(i, j);
        EXPECT_NEAR(s, 1.0, 1e-12);
      }
    }
  }
}

TEST(RelnetProperties, PamOffRelationPathIgnoresAffinityWeights) {
  const auto gen = tiny_gen();
  for (int c = 0; c < kCases; ++c) {
    auto rng = rng_for(15, c);
    const auto clip = scene::generate_clip(gen, static_cast<std::uint64_t>(c));
    relnet::RelationModel a(tiny_model(static_cast<std::uint64_t>(c)));
    relnet::RelationModel b = a;
    for (auto& p : b.params()) {
      const bool affinity_side = p.name.rfind("init.", 0) == 0 || p.name.find(".upd.") != std::string::npos;
      if (!affinity_side) continue;
      for (auto& v : p.value.values()) v += uniform(rng, -1, 1);
    }
    const auto pa = relnet::predict(a, clip, scene::kPersonClass, false);
    const auto pb = relnet::predict(b, clip, scene::kPersonClass, false);
    for (std::size_t f = 0; f < pa.size(); ++f) EXPECT_EQ(pa[f].pc, pb[f].pc);
  }
}

TEST(RelnetProperties, PairPermutationEquivariance) {
  for (int c = 0; c < kCases; ++c) {
    auto rng = rng_for(16, c);
    relnet::RelationModel model(tiny_model(static_cast<std::uint64_t>(c)));
    std::vector<scene::Frame> frames;
    for (int t = 0; t < 2; ++t) frames.push_back(random_frame(rng, uniform_int(rng, 2, 5), 4, 6));
    std::vector<relnet::FrameInput> in, perm_in;
    std::vector<std::vector<std::size_t>> perms;
    for (const auto& f : frames) {
      in.push_back({&f, scene::enumerate_pairs(f, -1)});
      std::vector<std::size_t> perm(in.back().pairs.size());
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      std::shuffle(perm.begin(), perm.end(), rng);
      relnet::FrameInput pi{&f, {}};
      for (auto k : perm) pi.pairs.push_back(in.back().pairs[k]);
      perm_in.push_back(pi);
      perms.push_back(perm);
    }
    const bool pam = c % 2 == 0;
    Tape t1, t2;
    const auto o1 = model.forward(t1, in, pam);
    const auto o2 = model.forward(t2, perm_in, pam);
    for (std::size_t f = 0; f < frames.size(); ++f) {
      const auto& perm = perms[f];
      const auto& pc1 = o1.frames[f].pc.value();
      const auto& pc2 = o2.frames[f].pc.value();
      for (std::size_t i = 0; i < perm.size(); ++i) {
        EXPECT_NEAR(o2.frames[f].pa.value()[i], o1.frames[f].pa.value()[perm[i]], 1e-10);
        for (std::size_t p = 0; p < pc1.dim(1); ++p) EXPECT_NEAR(pc2.at(i, p), pc1.at(perm[i], p), 1e-10);
      }
    }
  }
}

TEST(RelnetProperties, ScoresStrictlyInsideUnitInterval) {
  const auto gen = tiny_gen();
  for (int c = 0; c < kCases; ++c) {
    relnet::RelationModel model(tiny_model(static_cast<std::uint64_t>(c) + 500));
    const auto clip = scene::generate_clip(gen, static_cast<std::uint64_t>(c) + 500);
    for (const auto& fp : relnet::predict(model, clip, scene::kPersonClass, c % 2 == 0)) {
      for (double v : fp.pa) {
        EXPECT_GT(v, 0.0);
        EXPECT_LT(v, 1.0);
      }
      for (double v : fp.pc.values()) {
        EXPECT_GT(v, 0.0);
        EXPECT_LT(v, 1.0);
      }
    }
  }
}

// ---- losses ----

namespace {

struct PaCase {
  std::vector<double> pa;
  std::vector<std::size_t> pos, neg;
};

PaCase random_pa_case(std::mt19937_64& rng) {
  PaCase c;
  const int np = uniform_int(rng, 1, 5), nn = uniform_int(rng, 1, 8);
  for (int i = 0; i < np + nn; ++i) c.pa.push_back(uniform(rng, 0.01, 0.99));
  for (int i = 0; i < np; ++i) c.pos.push_back(static_cast<std::size_t>(i));
  for (int i = np; i < np + nn; ++i) c.neg.push_back(static_cast<std::size_t>(i));
  return c;
}

std::vector<std::size_t> replicate(const std::vector<std::size_t>& v, int k) {
  std::vector<std::size_t> out;
  for (int i = 0; i < k; ++i) out.insert(out.end(), v.begin(), v.end());
  return out;
}

}  // namespace

TEST(LossProperties, BalancedReplicationInvariantStandardNot) {
  int standard_changed = 0;
  for (int c = 0; c < kCases; ++c) {
    auto rng = rng_for(17, c);
    const auto pc = random_pa_case(rng);
    const int k = uniform_int(rng, 2, 5);
    Tape tape;
    auto pa = tape.constant(Tensor::vector(pc.pa));
    const auto rp = replicate(pc.pos, k), rn = replicate(pc.neg, k);
    const double base = loss::pa_balanced(pa, pc.pos, pc.neg).value().item();
    EXPECT_NEAR(loss::pa_balanced(pa, rp, pc.neg).value().item(), base, 1e-12);
    EXPECT_NEAR(loss::pa_balanced(pa, pc.pos, rn).value().item(), base, 1e-12);

    double mp = 0, mn = 0;
    for (auto i : pc.pos) mp -= std::log(pc.pa[i]) / static_cast<double>(pc.pos.size());
    for (auto i : pc.neg) mn -= std::log(1 - pc.pa[i]) / static_cast<double>(pc.neg.size());
    if (std::abs(mp - mn) > 1e-6) {
      const double s0 = loss::pa_standard(pa, pc.pos, pc.neg).value().item();
      const double s1 = loss::pa_standard(pa, pc.pos, rn).value().item();
      EXPECT_GT(std::abs(s1 - s0), 1e-9);
      ++standard_changed;
    }
  }
  EXPECT_GT(standard_changed, 90);
}

TEST(LossProperties, NonNegativeAndZeroOnDegenerate) {
  for (int c = 0; c < kCases; ++c) {
    auto rng = rng_for(18, c);
    const auto pc = random_pa_case(rng);
    Tape tape;
    auto pa = tape.constant(Tensor::vector(pc.pa));
    EXPECT_GE(loss::pa_balanced(pa, pc.pos, pc.neg).value().item(), 0.0);
    EXPECT_GE(loss::pa_standard(pa, pc.pos, pc.neg).value().item(), 0.0);
    const std::vector<std::size_t> none;
    EXPECT_EQ(loss::pa_balanced(pa, none, none).value().item(), 0.0);
    EXPECT_EQ(loss::pa_standard(pa, none, none).value().item(), 0.0);

    const std::size_t n = pc.pa.size();
    auto gram = tape.constant(random_tensor(rng, n, n, 2.0));
    auto trips = loss::enumerate_triplets(pc.pos, pc.neg, uniform(rng, 0.1, 2.0), 64, rng);
    for (auto mode : {loss::MarginMode::Hard, loss::MarginMode::Soft, loss::MarginMode::Adaptive}) {
      EXPECT_GE(loss::pam_triplet(gram, trips, mode).value().item(), 0.0);
      EXPECT_EQ(loss::pam_triplet(gram, {}, mode).value().item(), 0.0);
    }
    const std::size_t preds = 3;
    auto pcv = tape.constant(Tensor(diff::Shape{n, preds}, 0.3));
    std::vector<double> y(pc.pos.size() * preds);
    for (auto& v : y) v = uniform(rng) < 0.5 ? 1.0 : 0.0;
    EXPECT_GE(loss::relation(pcv, pc.pos, y).value().item(), 0.0);
    EXPECT_EQ(loss::relation(pcv, none, {}).value().item(), 0.0);
  }
}

TEST(LossProperties, HardPamShiftInvariant) {
  for (int c = 0; c < kCases; ++c) {
    auto rng = rng_for(19, c);
    const auto pc = random_pa_case(rng);
    const std::size_t n = pc.pa.size();
    const Tensor g = random_tensor(rng, n, n, 2.0);
    Tensor shifted = g;
    const double k = uniform(rng, -10, 10);
    for (auto& v : shifted.values()) v += k;
    const auto trips = loss::enumerate_triplets(pc.pos, pc.neg, uniform(rng, 0.1, 2.0), 64, rng);
    Tape tape;
    EXPECT_NEAR(loss::pam_triplet(tape.constant(g), trips, loss::MarginMode::Hard).value().item(),
                loss::pam_triplet(tape.constant(shifted), trips, loss::MarginMode::Hard).value().item(), 1e-9);
  }
}

TEST(LossProperties, SoftTargetAndAdaptiveMarginRanges) {
  for (int c = 0; c < kCases; ++c) {
    auto rng = rng_for(20, c);
    const double yp = uniform(rng) < 0.5 ? 0.0 : 1.0, pt = uniform(rng), dt = uniform_int(rng, 0, 6), a = uniform(rng, 0.1, 5);
    const double y = loss::soft_pa_target(yp, pt, dt, a);
    EXPECT_GE(y, std::min(yp, pt));
    EXPECT_LE(y, std::max(yp, pt));
    const double m = uniform(rng, 0.1, 3.0);
    const double am = loss::adaptive_margin(m, uniform(rng, 0.5, 1.0), uniform(rng, 0.0, 0.5));
    EXPECT_GE(am, 0.0);
    EXPECT_LE(am, m);
  }
}

// ---- training pipeline ----

TEST(PipelineProperties, MiddleFrameKeepsPartitionAndNoOverlap) {
  int c = 0;
  for (const auto& clip : corpus().clips) {
    auto rng = rng_for(21, c++);
    ram::RamConfig cfg;
    cfg.tau_r = uniform(rng);
    cfg.tau_gs = uniform(rng, 0.0, 0.5);
    cfg.enabled = uniform(rng) < 0.7;
    const auto mid = ram::match_clip(clip, corpus().attention, cfg);
    const auto labels = pipeline::propagate_labels(clip, mid);
    ASSERT_EQ(labels.size(), clip.frames.size());
    for (const auto& pf : labels) {
      if (pf.delta_t == 0) EXPECT_EQ(pf.partition, mid);
      std::set<scene::PairIndex> pos;
      for (const auto& pp : pf.partition.positives) pos.insert(pp.pair);
      for (const auto& n : pf.partition.negatives) EXPECT_EQ(pos.count(n), 0u);
      EXPECT_EQ(pos.size(), pf.partition.positives.size());
    }
  }
}

TEST(PipelineProperties, TrainingBitDeterministic) {
  for (int c = 0; c < kCases; ++c) {
    auto gen = tiny_gen();
    gen.seed = static_cast<std::uint64_t>(c);
    const auto data = io::generate_dataset(gen);
    pipeline::TrainingSet set;
    for (const auto& clip : data.clips) set.clips.push_back(&clip);
    for (const auto* clip : set.clips) set.partitions.push_back(ram::match_clip(*clip, data.attention, {}));
    pipeline::TrainConfig tc;
    tc.epochs = 2;
    tc.seed = static_cast<std::uint64_t>(c) + 17;
    loss::LossConfig lc;
    lc.triplet_cap = 3;
    const auto mc = tiny_model(static_cast<std::uint64_t>(c));
    const auto a = pipeline::train_step1(set, mc, lc, tc);
    const auto b = pipeline::train_step1(set, mc, lc, tc);
    for (const auto& p : a.model.params()) ASSERT_EQ(b.model.params().get(p.name).value, p.value);
    if (c % 4 == 0) {
      const auto s1 = pipeline::train_step2(set, a.model, lc, tc);
      const auto s2 = pipeline::train_step2(set, a.model, lc, tc);
      for (const auto& p : s1.model.params()) ASSERT_EQ(s2.model.params().get(p.name).value, p.value);
    }
  }
}

TEST(PipelineProperties, CosineMonotone) {
  for (int c = 0; c < kCases; ++c) {
    auto rng = rng_for(22, c);
    const std::int64_t total = uniform_int(rng, 1, 500);
    const double base = uniform(rng, 1e-6, 1.0);
    double prev = pipeline::cosine_lr(base, 0, total);
    for (std::int64_t s = 1; s <= total + 2; ++s) {
      const double lr = pipeline::cosine_lr(base, s, total);
      EXPECT_LE(lr, prev);
      EXPECT_GE(lr, 0.0);
      prev = lr;
    }
  }
}

// ---- ranking and recall ----

namespace {

struct RankCase {
  scene::Frame frame;
  relnet::FramePrediction pred;
  std::vector<scene::GroundTruthTriplet> gt;
};

// Frames with coarse score levels so ties are common; GT built from detections.
RankCase random_rank_case(std::mt19937_64& rng) {
  RankCase rc;
  const int n = uniform_int(rng, 2, 5);
  for (int i = 0; i < n; ++i)
    rc.frame.detections.push_back(fixtures::make_detection(i, i == 0 ? 0 : uniform_int(rng, 0, 2), fixtures::random_int_box(rng, 6),
                                                          0.25 * uniform_int(rng, 1, 4)));
  auto pairs = scene::enumerate_pairs(rc.frame, -1);
  std::shuffle(pairs.begin(), pairs.end(), rng);
  pairs.resize(std::min<std::size_t>(pairs.size(), 8));
  std::sort(pairs.begin(), pairs.end());
  const std::size_t n_pred = 3;
  rc.pred.pairs = pairs;
  rc.pred.pc = Tensor(diff::Shape{pairs.size(), n_pred});
  for (auto& v : rc.pred.pc.values()) v = 0.125 * uniform_int(rng, 1, 8);
  for (std::size_t i = 0; i < pairs.size(); ++i) rc.pred.pa.push_back(0.125 * uniform_int(rng, 1, 8));
  const int g = uniform_int(rng, 1, 5);
  for (int i = 0; i < g; ++i) {
    const auto& p = pairs[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(pairs.size()) - 1))];
    const auto& s = rc.frame.detection(p.subject);
    const auto& o = rc.frame.detection(p.object);
    rc.gt.push_back({{s.box, s.class_id}, uniform_int(rng, 0, 2), {o.box, o.class_id}});
  }
  return rc;
}

}  // namespace

TEST(EvalProperties, UniformPaScalingKeepsRanking) {
  for (int c = 0; c < kCases; ++c) {
    auto rng = rng_for(23, c);
    auto rc = random_rank_case(rng);
    for (auto& v : rc.pred.pa) v = uniform(rng, 0.01, 1.0);
    for (auto& v : rc.pred.pc.values()) v = uniform(rng, 0.01, 1.0);
    auto scaled = rc.pred;
    const double k = uniform(rng, 0.05, 1.0);
    for (auto& v : scaled.pa) v *= k;
    for (auto protocol : {eval::Protocol::WithConstraint, eval::Protocol::NoConstraint}) {
      const auto a = eval::rank_frame(rc.pred, rc.frame, protocol, true);
      const auto b = eval::rank_frame(scaled, rc.frame, protocol, true);
      ASSERT_EQ(a.size(), b.size());
      for (std::size_t i = 0; i < a.size(); ++i)
        EXPECT_EQ(std::tie(a[i].subject, a[i].object, a[i].predicate), std::tie(b[i].subject, b[i].object, b[i].predicate));
      for (std::size_t kk : {1u, 3u, 10u})
        EXPECT_EQ(*eval::recall_at_k(a, rc.frame, rc.gt, kk, 0.5), *eval::recall_at_k(b, rc.frame, rc.gt, kk, 0.5));
    }
  }
}

TEST(EvalProperties, WithConstraintTopKInsideNoConstraintPool) {
  for (int c = 0; c < kCases; ++c) {
    auto rng = rng_for(24, c);
    const auto rc = random_rank_case(rng);
    const auto wc = eval::rank_frame(rc.pred, rc.frame, eval::Protocol::WithConstraint, true);
    const auto nc = eval::rank_frame(rc.pred, rc.frame, eval::Protocol::NoConstraint, true);
    std::set<std::tuple<int, int, int>> pool;
    for (const auto& t : nc) pool.emplace(t.subject, t.object, t.predicate);
    for (std::size_t i = 0; i < std::min<std::size_t>(10, wc.size()); ++i)
      EXPECT_TRUE(pool.count({wc[i].subject, wc[i].object, wc[i].predicate}));
  }
}

TEST(EvalProperties, NoConstraintRecallAtLeastWithConstraint) {
  for (int c = 0; c < kCases; ++c) {
    auto rng = rng_for(25, c);
    const auto rc = random_rank_case(rng);
    const auto wc = eval::rank_frame(rc.pred, rc.frame, eval::Protocol::WithConstraint, true);
    const auto nc = eval::rank_frame(rc.pred, rc.frame, eval::Protocol::NoConstraint, true);
    for (std::size_t k : {1u, 2u, 3u, 5u, 10u})
      EXPECT_GE(*eval::recall_at_k(nc, rc.frame, rc.gt, k, 0.5), *eval::recall_at_k(wc, rc.frame, rc.gt, k, 0.5))
          << "case " << c << " K=" << k;
  }
}

// Each pair outranks a With-Constraint candidate with at most all of its predicates,
// so No-Constraint at K times the predicate count covers With-Constraint at K.
TEST(EvalProperties, NoConstraintScaledKCoversWithConstraint) {
  for (int c = 0; c < kCases; ++c) {
    auto rng = rng_for(28, c);
    const auto rc = random_rank_case(rng);
    const std::size_t n_pred = rc.pred.pc.dim(1);
    const auto wc = eval::rank_frame(rc.pred, rc.frame, eval::Protocol::WithConstraint, c % 2 == 0);
    const auto nc = eval::rank_frame(rc.pred, rc.frame, eval::Protocol::NoConstraint, c % 2 == 0);
    for (std::size_t k : {1u, 2u, 3u, 5u}) {
      std::set<std::tuple<int, int, int>> top;
      for (std::size_t i = 0; i < std::min(nc.size(), k * n_pred); ++i) top.emplace(nc[i].subject, nc[i].object, nc[i].predicate);
      for (std::size_t i = 0; i < std::min(wc.size(), k); ++i) EXPECT_TRUE(top.count({wc[i].subject, wc[i].object, wc[i].predicate}));
      EXPECT_GE(*eval::recall_at_k(nc, rc.frame, rc.gt, k * n_pred, 0.5), *eval::recall_at_k(wc, rc.frame, rc.gt, k, 0.5));
    }
  }
}

TEST(EvalProperties, RecallMonotoneInK) {
  for (int c = 0; c < kCases; ++c) {
    auto rng = rng_for(26, c);
    const auto rc = random_rank_case(rng);
    for (auto protocol : {eval::Protocol::WithConstraint, eval::Protocol::NoConstraint}) {
      const auto r = eval::rank_frame(rc.pred, rc.frame, protocol, c % 2 == 0);
      double prev = 0.0;
      for (std::size_t k = 1; k <= r.size() + 1; ++k) {
        const double v = *eval::recall_at_k(r, rc.frame, rc.gt, k, 0.5);
        EXPECT_GE(v, prev);
        prev = v;
      }
    }
  }
}

TEST(EvalProperties, RankingIsStrictTotalOrder) {
  for (int c = 0; c < kCases; ++c) {
    auto rng = rng_for(27, c);
    const auto rc = random_rank_case(rng);
    const auto r = eval::rank_frame(rc.pred, rc.frame, eval::Protocol::NoConstraint, true);
    for (std::size_t i = 0; i < r.size(); ++i) {
      EXPECT_FALSE(eval::ranks_before(r[i], r[i]));
      for (std::size_t j = 0; j < r.size(); ++j) {
        if (i == j) continue;
        const bool ij = eval::ranks_before(r[i], r[j]), ji = eval::ranks_before(r[j], r[i]);
        EXPECT_NE(ij, ji);
        EXPECT_EQ(ij, i < j);
        for (std::size_t k = 0; k < r.size(); ++k)
          if (ij && eval::ranks_before(r[j], r[k])) EXPECT_TRUE(eval::ranks_before(r[i], r[k]));
      }
    }
  }
}

// ---- command line ----

TEST(CliProperties, GenDataReproducibleAndSeedEchoed) {
  namespace fs = std::filesystem;
  const auto root = fs::temp_directory_path() / "pavsgg_cli_props";
  fs::remove_all(root);
  fs::create_directories(root);
  fixtures::write_text(root / "cfg.json", R"({"gen": {"clips": 1, "frames_per_clip": 2, "distractors_per_frame": 2}})");
  for (int c = 0; c < kCases; ++c) {
    const std::string seed = std::to_string(1000 + c);
    const auto a = root / ("a" + seed), b = root / ("b" + seed);
    ASSERT_EQ(fixtures::run_cli("gen-data --config " + (root / "cfg.json").string() + " --seed " + seed + " --out " + a.string()), 0);
    ASSERT_EQ(fixtures::run_cli("gen-data --config " + (root / "cfg.json").string() + " --seed " + seed + " --out " + b.string()), 0);
    EXPECT_TRUE(fixtures::same_tree(a, b));
    const auto run = io::read_json_file(a / "run.json");
    EXPECT_EQ(run.at("seed").get<std::uint64_t>(), std::stoull(seed));
    EXPECT_EQ(run.at("config").at("gen").at("seed").get<std::uint64_t>(), std::stoull(seed));
    for (const auto& e : fs::directory_iterator(a)) EXPECT_NO_THROW(io::read_json_file(e.path()));
    fs::remove_all(a);
    fs::remove_all(b);
  }
  fs::remove_all(root);
}
