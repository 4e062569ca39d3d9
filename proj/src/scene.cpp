#include "pavsgg/scene.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

namespace pavsgg::scene {

bool BoundingBox::valid() const {
  return std::isfinite(x1) && std::isfinite(y1) && std::isfinite(x2) && std::isfinite(y2) &&
         x1 >= 0 && y1 >= 0 && x1 < x2 && y1 < y2;
}

double iou(const BoundingBox& a, const BoundingBox& b) {
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (iw <= 0 || ih <= 0) return 0.0;
  const double inter = iw * ih;
  return inter / (a.area() + b.area() - inter);
}

const Detection& Frame::detection(int id) const {
  for (const auto& d : detections)
    if (d.id == id) return d;
  throw DataError("frame " + std::to_string(t) + " has no detection with id " + std::to_string(id));
}

void validate_clip(const VideoClip& clip, int feature_dim, int num_classes, int num_predicates) {
  auto fail = [&](const std::string& what) { throw DataError(clip.clip_id + ": " + what); };
  if (clip.frames.empty()) fail("no frames");
  if (clip.middle_index < 0 || clip.middle_index >= static_cast<int>(clip.frames.size()))
    fail("middle_index out of range");
  for (const auto& a : clip.annotations) {
    if (a.subject_class < 0 || a.subject_class >= num_classes || a.object_class < 0 ||
        a.object_class >= num_classes || a.predicate < 0 || a.predicate >= num_predicates)
      fail("annotation index outside vocabulary");
  }
  for (const auto& f : clip.frames) {
    std::set<int> ids;
    for (const auto& d : f.detections) {
      if (!ids.insert(d.id).second) fail("duplicate detection id " + std::to_string(d.id));
      if (!d.box.valid()) fail("invalid box on detection " + std::to_string(d.id));
      if (!(d.confidence > 0.0 && d.confidence <= 1.0)) fail("confidence outside (0,1]");
      if (d.class_id < 0 || d.class_id >= num_classes) fail("detection class outside vocabulary");
      if (static_cast<int>(d.feature.size()) != feature_dim)
        fail("feature length " + std::to_string(d.feature.size()) + " != " +
             std::to_string(feature_dim));
    }
  }
}

std::vector<PairIndex> enumerate_pairs(const Frame& frame, int subject_class) {
  std::vector<const Detection*> sorted;
  for (const auto& d : frame.detections) sorted.push_back(&d);
  std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->id < b->id; });
  std::vector<PairIndex> pairs;
  for (const auto* s : sorted) {
    if (subject_class >= 0 && s->class_id != subject_class) continue;
    for (const auto* o : sorted) {
      if (o->id == s->id) continue;
      pairs.push_back({s->id, o->id});
    }
  }
  return pairs;
}

std::optional<std::size_t> oracle_match(const Frame& frame, const PairIndex& pair,
                                        double iou_threshold) {
  if (!frame.oracle_gt) return std::nullopt;
  const auto& s = frame.detection(pair.subject);
  const auto& o = frame.detection(pair.object);
  const auto& gt = *frame.oracle_gt;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (gt[i].subject.class_id != s.class_id || gt[i].object.class_id != o.class_id) continue;
    if (iou(gt[i].subject.box, s.box) > iou_threshold &&
        iou(gt[i].object.box, o.box) > iou_threshold)
      return i;
  }
  return std::nullopt;
}

std::vector<double> union_feature(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("union_feature: length mismatch");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = std::max(a[i], b[i]);
  return out;
}

void GenConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("gen config: " + what); };
  if (clips < 1) fail("clips must be >= 1");
  if (frames_per_clip < 1) fail("frames_per_clip must be >= 1");
  if (interactive_triplets < 1) fail("interactive_triplets must be >= 1");
  if (distractors_per_frame < 0) fail("distractors_per_frame must be >= 0");
  if (num_classes < 2) fail("num_classes must be >= 2 (person plus one object class)");
  if (num_predicates < 1) fail("num_predicates must be >= 1");
  if (feature_dim < num_classes + 1) fail("feature_dim must hold the class one-hot plus a flag");
  if (attention_grid < 1) fail("attention_grid must be >= 1");
  for (double p : {predicate_regularity, distractor_leak, vl_failure, duplicate_instance,
                   attention_quality_lo, attention_quality_hi}) {
    if (!(p >= 0.0 && p <= 1.0)) fail("probabilities and qualities must lie in [0,1]");
  }
  if (attention_quality_lo > attention_quality_hi) fail("attention quality range is reversed");
  if (!(interactive_conf_lo > 0 && interactive_conf_lo <= interactive_conf_hi &&
        interactive_conf_hi <= 1.0))
    fail("interactive confidence range must lie in (0,1]");
  if (!(distractor_conf_lo > 0 && distractor_conf_lo <= distractor_conf_hi &&
        distractor_conf_hi <= 1.0))
    fail("distractor confidence range must lie in (0,1]");
  if (feature_noise < 0 || box_jitter < 0 || motion < 0 || peak_sharpness <= 0)
    fail("noise scales must be >= 0 and sharpness > 0");
  const long long unique = static_cast<long long>(num_classes - 1) * num_predicates;
  if (interactive_triplets > unique) fail("more interactive triplets than distinct class triplets");
}

namespace {

struct Instance {
  BoundingBox box;
  int class_id = 0;
  double vx = 0, vy = 0;
  bool interactive = false;
};

BoundingBox clip_to_image(BoundingBox b) {
  constexpr double kMin = 2.0;
  b.x1 = std::clamp(b.x1, 0.0, kImageSize - kMin);
  b.y1 = std::clamp(b.y1, 0.0, kImageSize - kMin);
  b.x2 = std::clamp(b.x2, b.x1 + kMin, kImageSize);
  b.y2 = std::clamp(b.y2, b.y1 + kMin, kImageSize);
  return b;
}

BoundingBox centered(double cx, double cy, double w, double h) {
  return clip_to_image({cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2});
}

}  // namespace

std::uint64_t clip_seed_for(std::uint64_t corpus_seed, std::size_t index) {
  // splitmix64 over (seed, index)
  std::uint64_t z = corpus_seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

VideoClip generate_clip(const GenConfig& cfg, std::uint64_t clip_seed) {
  cfg.validate();
  std::mt19937_64 rng(clip_seed);
  auto uni = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  auto coin = [&](double p) { return uni(0.0, 1.0) < p; };
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  std::normal_distribution<double> gauss(0.0, 1.0);

  std::vector<Instance> instances;
  struct TripletSpec {
    std::size_t subject, object;
    int predicate;
  };
  std::vector<TripletSpec> specs;
  std::set<UnlocalizedTriplet> used;

  auto person_box = [&] {
    const double w = uni(50, 100), h = uni(110, 200);
    return centered(uni(w / 2, kImageSize - w / 2), uni(h / 2, kImageSize - h / 2), w, h);
  };
  auto object_box = [&] {
    const double w = uni(30, 70), h = uni(30, 70);
    return centered(uni(w / 2, kImageSize - w / 2), uni(h / 2, kImageSize - h / 2), w, h);
  };

  for (int m = 0; m < cfg.interactive_triplets; ++m) {
    Instance person{person_box(), kPersonClass, uni(-cfg.motion, cfg.motion),
                    uni(-cfg.motion, cfg.motion), true};
    int obj_class = 1, pred = 0;
    for (int tries = 0;; ++tries) {
      obj_class = pick(1, cfg.num_classes - 1);
      pred = coin(cfg.predicate_regularity) ? obj_class % cfg.num_predicates
                                            : pick(0, cfg.num_predicates - 1);
      if (!used.count({kPersonClass, pred, obj_class})) break;
      if (tries > 1000) throw std::logic_error("could not draw a distinct class triplet");
    }
    used.insert({kPersonClass, pred, obj_class});

    const double ow = uni(30, 70), oh = uni(30, 70);
    const double cx = person.box.center_x() + uni(-1, 1) * (0.5 * person.box.width() + 0.3 * ow);
    const double cy = person.box.y1 + uni(0.3, 0.8) * person.box.height();
    Instance object{centered(cx, cy, ow, oh), obj_class, person.vx + uni(-0.5, 0.5),
                    person.vy + uni(-0.5, 0.5), true};

    instances.push_back(person);
    instances.push_back(object);
    specs.push_back({instances.size() - 2, instances.size() - 1, pred});

    if (coin(cfg.duplicate_instance)) {
      // Same-class look-alike next to the interacting object, far enough that
      // the two boxes overlap with IoU well below 0.5.
      const double dx = (coin(0.5) ? 1 : -1) * uni(1.3, 2.0) * ow;
      const double dy = uni(-0.5, 0.5) * oh;
      Instance dup{centered(object.box.center_x() + dx, object.box.center_y() + dy, ow, oh),
                   obj_class, uni(-cfg.motion, cfg.motion), uni(-cfg.motion, cfg.motion), false};
      instances.push_back(dup);
    }
  }
  for (int d = 0; d < cfg.distractors_per_frame; ++d) {
    const int cls = pick(0, cfg.num_classes - 1);
    Instance inst{cls == kPersonClass ? person_box() : object_box(), cls,
                  uni(-cfg.motion, cfg.motion), uni(-cfg.motion, cfg.motion), false};
    instances.push_back(inst);
  }

  // Detection ids follow a per-clip shuffled order, stable across frames.
  std::vector<std::size_t> order(instances.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);

  VideoClip clip;
  clip.clip_id = "clip_" + std::to_string(clip_seed % 100000000ULL);
  clip.middle_index = cfg.frames_per_clip / 2;
  for (const auto& s : specs) {
    clip.annotations.push_back(
        {instances[s.subject].class_id, s.predicate, instances[s.object].class_id});
  }

  for (int t = 0; t < cfg.frames_per_clip; ++t) {
    const double dt = t - clip.middle_index;
    std::vector<BoundingBox> truth(instances.size());
    for (std::size_t i = 0; i < instances.size(); ++i) {
      const auto& in = instances[i];
      truth[i] = clip_to_image({in.box.x1 + in.vx * dt, in.box.y1 + in.vy * dt,
                                in.box.x2 + in.vx * dt, in.box.y2 + in.vy * dt});
    }
    Frame frame;
    frame.t = t;
    for (std::size_t k = 0; k < order.size(); ++k) {
      const auto& in = instances[order[k]];
      const auto& tb = truth[order[k]];
      Detection det;
      det.id = static_cast<int>(k);
      det.class_id = in.class_id;
      det.box = clip_to_image({tb.x1 + cfg.box_jitter * gauss(rng), tb.y1 + cfg.box_jitter * gauss(rng),
                               tb.x2 + cfg.box_jitter * gauss(rng), tb.y2 + cfg.box_jitter * gauss(rng)});
      det.confidence = in.interactive ? uni(cfg.interactive_conf_lo, cfg.interactive_conf_hi)
                                      : uni(cfg.distractor_conf_lo, cfg.distractor_conf_hi);
      det.confidence = std::clamp(det.confidence, 1e-6, 1.0);
      det.feature.assign(static_cast<std::size_t>(cfg.feature_dim), 0.0);
      det.feature[static_cast<std::size_t>(in.class_id)] = 1.0;
      det.feature[static_cast<std::size_t>(cfg.num_classes)] = in.interactive ? 1.0 : 0.0;
      for (auto& v : det.feature) v += cfg.feature_noise * gauss(rng);
      frame.detections.push_back(std::move(det));
    }
    std::vector<GroundTruthTriplet> gt;
    for (const auto& s : specs) {
      gt.push_back({{truth[s.subject], instances[s.subject].class_id},
                    s.predicate,
                    {truth[s.object], instances[s.object].class_id}});
    }
    frame.oracle_gt = std::move(gt);
    clip.frames.push_back(std::move(frame));
  }
  return clip;
}

std::vector<VideoClip> generate_corpus(const GenConfig& cfg) {
  cfg.validate();
  std::vector<VideoClip> clips;
  clips.reserve(static_cast<std::size_t>(cfg.clips));
  for (int i = 0; i < cfg.clips; ++i) {
    auto clip = generate_clip(cfg, clip_seed_for(cfg.seed, static_cast<std::size_t>(i)));
    char id[32];
    std::snprintf(id, sizeof id, "clip_%05d", i);
    clip.clip_id = id;
    clips.push_back(std::move(clip));
  }
  return clips;
}

double non_interactive_ratio(const VideoClip& clip, int subject_class) {
  std::size_t total = 0, negative = 0;
  for (const auto& f : clip.frames) {
    for (const auto& p : enumerate_pairs(f, subject_class)) {
      ++total;
      if (!oracle_match(f, p)) ++negative;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(negative) / static_cast<double>(total);
}

}  // namespace pavsgg::scene
