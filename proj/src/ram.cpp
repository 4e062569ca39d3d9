#include "pavsgg/ram.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "pavsgg/diff/ops.hpp"

namespace pavsgg::ram {

using scene::AttentionMap;
using scene::BoundingBox;

void RamConfig::validate() const {
  if (!(tau_r >= 0.0 && tau_r <= 1.0)) throw std::invalid_argument("ram config: tau_r must lie in [0,1]");
  if (!(tau_gs >= 0.0 && tau_gs < 1.0)) throw std::invalid_argument("ram config: tau_gs must lie in [0,1)");
}

ReliabilityResult reliability(const AttentionMap& map) {
  ReliabilityResult res;
  res.total_mass = map.total_mass();
  if (!(res.total_mass > 0.0)) return res;

  const int h = map.height(), w = map.width();
  double mx = 0.0, my = 0.0;
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      const double p = map.at(i, j) / res.total_mass;
      mx += p * j;
      my += p * i;
    }
  double var = 0.0;
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      const double p = map.at(i, j) / res.total_mass;
      var += p * ((j - mx) * (j - mx) + (i - my) * (i - my));
    }
  res.mu_x = mx;
  res.mu_y = my;
  res.sigma_spat = std::sqrt(std::max(0.0, var));
  res.r = std::exp(-res.sigma_spat / std::sqrt(static_cast<double>(h * h + w * w)));
  return res;
}

namespace {

double mass_in(const AttentionMap& map, const std::vector<std::size_t>& cells) {
  double s = 0.0;
  for (auto c : cells) s += map.values()[c];
  return s;
}

}  // namespace

double concentration(const AttentionMap& map, const BoundingBox& box) {
  const double total = map.total_mass();
  if (!(total > 0.0)) throw ZeroAttentionMass();
  return mass_in(map, scene::cells_in_box(map.height(), map.width(), box)) / total;
}

double density(const AttentionMap& map, const BoundingBox& box) {
  const auto cells = scene::cells_in_box(map.height(), map.width(), box);
  if (cells.empty()) throw EmptyBoxProjection();
  return mass_in(map, cells) / static_cast<double>(cells.size());
}

double grounding_score(const AttentionMap& map, const BoundingBox& box) {
  return concentration(map, box) * diff::sigmoid_value(density(map, box));
}

GroundingResult ground_candidates(const AttentionMap& map,
                                  const std::vector<const scene::Detection*>& candidates,
                                  double tau_gs) {
  GroundingResult res;
  const CandidateScore* best = nullptr;
  for (const auto* d : candidates) {
    CandidateScore cs;
    cs.detection_id = d->id;
    cs.concentration = concentration(map, d->box);
    try {
      cs.density = density(map, d->box);
      cs.gs = cs.concentration * diff::sigmoid_value(cs.density);
    } catch (const EmptyBoxProjection&) {
      cs.density = 0.0;
      cs.gs = 0.0;
    }
    res.candidates.push_back(cs);
  }
  for (const auto& cs : res.candidates) {
    if (!best || cs.gs > best->gs || (cs.gs == best->gs && cs.detection_id < best->detection_id))
      best = &cs;
  }
  if (best && best->gs > tau_gs) res.best = best->detection_id;
  return res;
}

std::vector<int> resolved_ids(const MatchDecision& d) {
  if (const auto* g = std::get_if<Grounded>(&d)) return {g->detection_id};
  if (const auto* c = std::get_if<ClassFallback>(&d)) return c->detection_ids;
  return {};
}

MatchDecision match_entity_by_class(int entity_class,
                                    const std::vector<scene::Detection>& detections) {
  std::vector<int> ids;
  for (const auto& d : detections)
    if (d.class_id == entity_class) ids.push_back(d.id);
  if (ids.empty()) return Discarded{};
  std::sort(ids.begin(), ids.end());
  return ClassFallback{std::move(ids)};
}

MatchDecision match_entity(int entity_class, const std::vector<scene::Detection>& detections,
                           const AttentionMap& map, const RamConfig& cfg) {
  auto by_class = match_entity_by_class(entity_class, detections);
  if (std::holds_alternative<Discarded>(by_class) || !cfg.enabled) return by_class;

  const auto rel = reliability(map);
  if (!(rel.total_mass > 0.0) || rel.r < cfg.tau_r) return by_class;

  std::vector<const scene::Detection*> candidates;
  for (const auto& d : detections)
    if (d.class_id == entity_class) candidates.push_back(&d);
  const auto grounded = ground_candidates(map, candidates, cfg.tau_gs);
  if (grounded.best) return Grounded{*grounded.best};
  return Discarded{};
}

MatchPartition build_partition(const scene::VideoClip& clip,
                               const std::vector<EntityDecisions>& decisions, int t,
                               int subject_class) {
  const auto& frame = clip.frames.at(static_cast<std::size_t>(t));
  const auto candidates = scene::enumerate_pairs(frame, subject_class);
  std::map<scene::PairIndex, std::set<int>> labeled;
  const std::size_t n = std::min(decisions.size(), clip.annotations.size());
  for (std::size_t a = 0; a < n; ++a) {
    const auto subjects = resolved_ids(decisions[a].subject);
    const auto objects = resolved_ids(decisions[a].object);
    for (int s : subjects)
      for (int o : objects)
        if (s != o) labeled[{s, o}].insert(clip.annotations[a].predicate);
  }
  MatchPartition part;
  part.t = t;
  for (const auto& p : candidates) {
    if (auto it = labeled.find(p); it != labeled.end()) {
      part.positives.push_back({p, it->second});
    } else {
      part.negatives.push_back(p);
    }
  }
  return part;
}

MatchPartition match_clip(const scene::VideoClip& clip, const scene::AttentionStore& attention,
                          const RamConfig& cfg) {
  const auto& frame = clip.middle();
  const AttentionMap empty(1, 1, 0.0);
  std::vector<EntityDecisions> decisions;
  for (std::size_t a = 0; a < clip.annotations.size(); ++a) {
    auto decide = [&](scene::EntitySide side, int cls) -> MatchDecision {
      if (!cfg.enabled) return match_entity_by_class(cls, frame.detections);
      auto it = attention.find({clip.clip_id, clip.middle_index, static_cast<int>(a), side});
      return match_entity(cls, frame.detections, it == attention.end() ? empty : it->second, cfg);
    };
    decisions.push_back({decide(scene::EntitySide::Subject, clip.annotations[a].subject_class),
                         decide(scene::EntitySide::Object, clip.annotations[a].object_class)});
  }
  return build_partition(clip, decisions, clip.middle_index, cfg.subject_class);
}

double f1_score(double precision, double recall) {
  return precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
}

namespace {

void finish(PseudoLabelMetrics& m) {
  m.precision = m.match_count ? static_cast<double>(m.true_positives) / m.match_count : 0.0;
  m.recall = m.gt_count ? static_cast<double>(m.gt_covered) / m.gt_count : 0.0;
  m.f1 = f1_score(m.precision, m.recall);
}

}  // namespace

PseudoLabelMetrics pseudo_label_metrics(const MatchPartition& partition, const scene::Frame& oracle) {
  if (!oracle.oracle_gt) throw scene::DataError("pseudo-label metrics need oracle ground truth");
  const auto& gt = *oracle.oracle_gt;
  PseudoLabelMetrics m;
  m.match_count = partition.positives.size();
  m.gt_count = gt.size();
  std::vector<bool> covered(gt.size(), false);
  for (const auto& pp : partition.positives) {
    const auto& s = oracle.detection(pp.pair.subject);
    const auto& o = oracle.detection(pp.pair.object);
    bool tp = false;
    for (std::size_t i = 0; i < gt.size(); ++i) {
      if (gt[i].subject.class_id == s.class_id && gt[i].object.class_id == o.class_id &&
          scene::iou(gt[i].subject.box, s.box) > 0.5 && scene::iou(gt[i].object.box, o.box) > 0.5) {
        tp = true;
        covered[i] = true;
      }
    }
    if (tp) ++m.true_positives;
  }
  m.gt_covered = static_cast<std::size_t>(std::count(covered.begin(), covered.end(), true));
  finish(m);
  return m;
}

PseudoLabelMetrics aggregate(const std::vector<PseudoLabelMetrics>& per_clip) {
  PseudoLabelMetrics total;
  for (const auto& m : per_clip) {
    total.match_count += m.match_count;
    total.true_positives += m.true_positives;
    total.gt_count += m.gt_count;
    total.gt_covered += m.gt_covered;
  }
  finish(total);
  return total;
}

nlohmann::json partition_to_json(const std::string& clip_id, const MatchPartition& p) {
  nlohmann::json pos = nlohmann::json::array(), neg = nlohmann::json::array();
  for (const auto& pp : p.positives)
    pos.push_back({{"s", pp.pair.subject}, {"o", pp.pair.object}, {"predicates", pp.predicates}});
  for (const auto& n : p.negatives) neg.push_back(nlohmann::json::array({n.subject, n.object}));
  return {{"clip_id", clip_id}, {"t", p.t}, {"positives", std::move(pos)}, {"negatives", std::move(neg)}};
}

MatchPartition partition_from_json(const nlohmann::json& j) {
  MatchPartition p;
  p.t = j.at("t").get<int>();
  for (const auto& e : j.at("positives")) {
    p.positives.push_back({{e.at("s").get<int>(), e.at("o").get<int>()},
                           e.at("predicates").get<std::set<int>>()});
  }
  for (const auto& e : j.at("negatives")) p.negatives.push_back({e[0].get<int>(), e[1].get<int>()});
  return p;
}

}  // namespace pavsgg::ram
