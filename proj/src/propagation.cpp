#include <cstdlib>
#include <map>

#include "pavsgg/pipeline.hpp"

namespace pavsgg::pipeline {

namespace {

// Same-class detection of `frame` overlapping `ref` the most (IoU >= 0.5);
// ties go to the lowest id.
const scene::Detection* best_overlap(const scene::Frame& frame, const scene::Detection& ref) {
  const scene::Detection* best = nullptr;
  double best_iou = 0.0;
  for (const auto& d : frame.detections) {
    if (d.class_id != ref.class_id) continue;
    const double v = scene::iou(d.box, ref.box);
    if (v < 0.5) continue;
    if (!best || v > best_iou || (v == best_iou && d.id < best->id)) {
      best = &d;
      best_iou = v;
    }
  }
  return best;
}

}  // namespace

PropagatedLabels propagate_labels(const scene::VideoClip& clip, const ram::MatchPartition& middle,
                                  int subject_class) {
  PropagatedLabels out;
  const auto& mid = clip.middle();
  for (const auto& frame : clip.frames) {
    PropagatedFrame pf;
    pf.t = frame.t;
    pf.delta_t = std::abs(frame.t - clip.middle_index);
    if (frame.t == clip.middle_index) {
      pf.partition = middle;
      out.push_back(std::move(pf));
      continue;
    }
    std::map<scene::PairIndex, std::set<int>> labeled;
    for (const auto& pp : middle.positives) {
      const auto* s = best_overlap(frame, mid.detection(pp.pair.subject));
      const auto* o = best_overlap(frame, mid.detection(pp.pair.object));
      if (!s || !o || s->id == o->id) continue;
      labeled[{s->id, o->id}].insert(pp.predicates.begin(), pp.predicates.end());
    }
    pf.partition.t = frame.t;
    for (const auto& p : scene::enumerate_pairs(frame, subject_class)) {
      if (auto it = labeled.find(p); it != labeled.end()) {
        pf.partition.positives.push_back({p, it->second});
      } else {
        pf.partition.negatives.push_back(p);
      }
    }
    out.push_back(std::move(pf));
  }
  return out;
}

}  // namespace pavsgg::pipeline
