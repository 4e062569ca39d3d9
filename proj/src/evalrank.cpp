#include "pavsgg/evalrank.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <stdexcept>

#include "pavsgg/dataset_io.hpp"
#include "pavsgg/parallel.hpp"

namespace pavsgg::eval {

namespace {

constexpr std::size_t kHistogramBins = 20;
constexpr Protocol kProtocols[] = {Protocol::WithConstraint, Protocol::NoConstraint};

}  // namespace

const char* to_string(Protocol p) {
  return p == Protocol::WithConstraint ? "with_constraint" : "no_constraint";
}

void EvalConfig::validate() const {
  if (ks.empty()) throw std::invalid_argument("eval config: ks must not be empty");
  for (int k : ks)
    if (k < 1) throw std::invalid_argument("eval config: every K must be >= 1");
  if (!(iou_threshold > 0.0 && iou_threshold <= 1.0))
    throw std::invalid_argument("eval config: iou_threshold must lie in (0,1]");
  if (!(test_fraction > 0.0 && test_fraction <= 1.0))
    throw std::invalid_argument("eval config: test_fraction must lie in (0,1]");
}

double composite_score(double conf_s, double conf_o, double pc, double pa, bool pa_enabled) {
  const double base = conf_s * conf_o * pc;
  return pa_enabled ? base * pa : base;
}

bool ranks_before(const RankedTriplet& a, const RankedTriplet& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.subject != b.subject) return a.subject < b.subject;
  if (a.object != b.object) return a.object < b.object;
  return a.predicate < b.predicate;
}

std::vector<RankedTriplet> rank_frame(const relnet::FramePrediction& pred, const scene::Frame& frame,
                                      Protocol protocol, bool pa_enabled) {
  std::vector<RankedTriplet> out;
  const std::size_t n_pred = pred.pc.rank() == 2 ? pred.pc.dim(1) : 0;
  for (std::size_t i = 0; i < pred.pairs.size(); ++i) {
    const auto& pair = pred.pairs[i];
    const double cs = frame.detection(pair.subject).confidence;
    const double co = frame.detection(pair.object).confidence;
    const double pa = i < pred.pa.size() ? pred.pa[i] : 1.0;
    auto emit = [&](std::size_t p) {
      out.push_back({pair.subject, pair.object, static_cast<int>(p),
                     composite_score(cs, co, pred.pc.at(i, p), pa, pa_enabled)});
    };
    if (protocol == Protocol::WithConstraint) {
      if (n_pred == 0) continue;
      std::size_t best = 0;
      for (std::size_t p = 1; p < n_pred; ++p)
        if (pred.pc.at(i, p) > pred.pc.at(i, best)) best = p;
      emit(best);
    } else {
      for (std::size_t p = 0; p < n_pred; ++p) emit(p);
    }
  }
  std::sort(out.begin(), out.end(), ranks_before);
  return out;
}

bool triplet_matches(const RankedTriplet& r, const scene::Frame& frame,
                     const scene::GroundTruthTriplet& gt, double iou_threshold) {
  if (r.predicate != gt.predicate) return false;
  const auto& s = frame.detection(r.subject);
  const auto& o = frame.detection(r.object);
  return s.class_id == gt.subject.class_id && o.class_id == gt.object.class_id &&
         scene::iou(s.box, gt.subject.box) >= iou_threshold &&
         scene::iou(o.box, gt.object.box) >= iou_threshold;
}

std::size_t count_hits(const std::vector<RankedTriplet>& ranked, const scene::Frame& frame,
                       const std::vector<scene::GroundTruthTriplet>& gt, std::size_t k,
                       double iou_threshold) {
  const std::size_t top = std::min(k, ranked.size());
  std::vector<std::vector<std::size_t>> adj(top);
  for (std::size_t i = 0; i < top; ++i)
    for (std::size_t g = 0; g < gt.size(); ++g)
      if (triplet_matches(ranked[i], frame, gt[g], iou_threshold)) adj[i].push_back(g);

  std::vector<std::ptrdiff_t> owner(gt.size(), -1);
  std::vector<char> visited;
  // Augmenting path search from prediction i.
  auto augment = [&](auto&& self, std::size_t i) -> bool {
    for (auto g : adj[i]) {
      if (visited[g]) continue;
      visited[g] = 1;
      if (owner[g] < 0 || self(self, static_cast<std::size_t>(owner[g]))) {
        owner[g] = static_cast<std::ptrdiff_t>(i);
        return true;
      }
    }
    return false;
  };
  std::size_t hits = 0;
  for (std::size_t i = 0; i < top; ++i) {
    if (adj[i].empty()) continue;
    visited.assign(gt.size(), 0);
    if (augment(augment, i)) ++hits;
  }
  return hits;
}

std::optional<double> recall_at_k(const std::vector<RankedTriplet>& ranked,
                                  const scene::Frame& frame,
                                  const std::vector<scene::GroundTruthTriplet>& gt, std::size_t k,
                                  double iou_threshold) {
  if (gt.empty()) return std::nullopt;
  return static_cast<double>(count_hits(ranked, frame, gt, k, iou_threshold)) /
         static_cast<double>(gt.size());
}

double EvalReport::recall(Protocol protocol, int k) const {
  for (const auto& r : recalls)
    if (r.protocol == protocol && r.k == k) return r.recall;
  throw std::out_of_range(std::string("no recall for ") + to_string(protocol) + " K=" + std::to_string(k));
}

namespace {

// Everything evaluate() needs from one clip.
struct ClipResult {
  // [protocol][k index] -> per-frame recalls of frames with ground truth.
  std::vector<std::vector<std::vector<double>>> frame_recalls;
  std::size_t frames = 0;
  std::size_t frames_with_gt = 0;
  std::vector<std::size_t> pos_hist, neg_hist;
  double pos_sum = 0.0, neg_sum = 0.0;
  std::size_t pos_n = 0, neg_n = 0;
  double ni = 0.0;
};

ClipResult evaluate_clip(const scene::VideoClip& clip, const relnet::RelationModel& model,
                         const EvalConfig& cfg, int subject_class) {
  ClipResult res;
  res.frame_recalls.assign(2, std::vector<std::vector<double>>(cfg.ks.size()));
  res.pos_hist.assign(kHistogramBins, 0);
  res.neg_hist.assign(kHistogramBins, 0);
  const auto preds = relnet::predict(model, clip, subject_class, cfg.pam);
  for (std::size_t f = 0; f < clip.frames.size(); ++f) {
    const auto& frame = clip.frames[f];
    if (!frame.oracle_gt) throw scene::DataError("clip " + clip.clip_id + " has no oracle ground truth");
    ++res.frames;
    const auto& pred = preds[f];
    for (std::size_t i = 0; i < pred.pairs.size(); ++i) {
      const double pa = pred.pa[i];
      const std::size_t bin = std::min(kHistogramBins - 1, static_cast<std::size_t>(pa * kHistogramBins));
      if (scene::oracle_match(frame, pred.pairs[i], cfg.iou_threshold)) {
        ++res.pos_hist[bin];
        res.pos_sum += pa;
        ++res.pos_n;
      } else {
        ++res.neg_hist[bin];
        res.neg_sum += pa;
        ++res.neg_n;
      }
    }
    const auto& gt = *frame.oracle_gt;
    if (gt.empty()) continue;
    ++res.frames_with_gt;
    for (std::size_t p = 0; p < 2; ++p) {
      const auto ranked = rank_frame(pred, frame, kProtocols[p], cfg.pa_scoring);
      for (std::size_t k = 0; k < cfg.ks.size(); ++k)
        res.frame_recalls[p][k].push_back(
            *recall_at_k(ranked, frame, gt, static_cast<std::size_t>(cfg.ks[k]), cfg.iou_threshold));
    }
  }
  res.ni = scene::non_interactive_ratio(clip, subject_class);
  return res;
}

std::vector<RecallEntry> mean_recalls(const std::vector<const ClipResult*>& results, const EvalConfig& cfg) {
  std::vector<RecallEntry> out;
  for (std::size_t p = 0; p < 2; ++p) {
    for (std::size_t k = 0; k < cfg.ks.size(); ++k) {
      double sum = 0.0;
      std::size_t n = 0;
      for (const auto* r : results) {
        for (double v : r->frame_recalls[p][k]) sum += v;
        n += r->frame_recalls[p][k].size();
      }
      out.push_back({kProtocols[p], cfg.ks[k], n ? sum / static_cast<double>(n) : 0.0});
    }
  }
  return out;
}

}  // namespace

EvalReport evaluate(const std::vector<const scene::VideoClip*>& clips,
                    const relnet::RelationModel& model, const EvalConfig& cfg, int subject_class,
                    const std::vector<ram::MatchPartition>* partitions) {
  cfg.validate();
  if (clips.empty()) throw scene::DataError("evaluation split is empty");
  if (partitions && partitions->size() != clips.size())
    throw scene::DataError("evaluation needs one partition per clip");

  std::vector<ClipResult> results(clips.size());
  parallel_for(clips.size(), [&](std::size_t c) {
    results[c] = evaluate_clip(*clips[c], model, cfg, subject_class);
  });

  EvalReport rep;
  rep.clips = clips.size();
  rep.pa_scoring = cfg.pa_scoring;
  rep.pam = cfg.pam;
  std::vector<const ClipResult*> all;
  rep.pa_histogram.resize(kHistogramBins);
  for (std::size_t b = 0; b < kHistogramBins; ++b) {
    rep.pa_histogram[b].lo = static_cast<double>(b) / kHistogramBins;
    rep.pa_histogram[b].hi = static_cast<double>(b + 1) / kHistogramBins;
  }
  double pos_sum = 0.0, neg_sum = 0.0;
  for (std::size_t c = 0; c < clips.size(); ++c) {
    const auto& r = results[c];
    all.push_back(&r);
    rep.frames += r.frames;
    rep.frames_with_gt += r.frames_with_gt;
    for (std::size_t b = 0; b < kHistogramBins; ++b) {
      rep.pa_histogram[b].pos += r.pos_hist[b];
      rep.pa_histogram[b].neg += r.neg_hist[b];
    }
    pos_sum += r.pos_sum;
    neg_sum += r.neg_sum;
    rep.pos_pairs += r.pos_n;
    rep.neg_pairs += r.neg_n;
    rep.ni.push_back({clips[c]->clip_id, r.ni});
  }
  rep.mean_pa_pos = rep.pos_pairs ? pos_sum / static_cast<double>(rep.pos_pairs) : 0.0;
  rep.mean_pa_neg = rep.neg_pairs ? neg_sum / static_cast<double>(rep.neg_pairs) : 0.0;
  rep.recalls = mean_recalls(all, cfg);

  // Quartile subsets by non-interactive ratio.
  std::vector<std::size_t> order(clips.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (results[a].ni != results[b].ni) return results[a].ni > results[b].ni;
    return clips[a]->clip_id < clips[b]->clip_id;
  });
  const std::size_t q = (clips.size() + 3) / 4;
  auto subset = [&](const std::string& name, std::size_t begin) {
    SubsetRecall s;
    s.name = name;
    std::vector<const ClipResult*> members;
    for (std::size_t i = begin; i < begin + q; ++i) {
      members.push_back(&results[order[i]]);
      s.clip_ids.push_back(clips[order[i]]->clip_id);
    }
    s.recalls = mean_recalls(members, cfg);
    return s;
  };
  rep.subsets.push_back(subset("high_ni", 0));
  rep.subsets.push_back(subset("low_ni", clips.size() - q));

  if (partitions) {
    std::vector<ram::PseudoLabelMetrics> per_clip;
    for (std::size_t c = 0; c < clips.size(); ++c)
      per_clip.push_back(ram::pseudo_label_metrics((*partitions)[c], clips[c]->middle()));
    rep.pseudo_labels = ram::aggregate(per_clip);
  }
  return rep;
}

namespace {

nlohmann::json recalls_to_json(const std::vector<RecallEntry>& recalls) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& r : recalls) j[to_string(r.protocol)]["R@" + std::to_string(r.k)] = r.recall;
  return j;
}

}  // namespace

nlohmann::json report_to_json(const EvalReport& rep) {
  nlohmann::json j;
  j["clips"] = rep.clips;
  j["frames"] = rep.frames;
  j["frames_with_gt"] = rep.frames_with_gt;
  j["pa_scoring"] = rep.pa_scoring;
  j["pam"] = rep.pam;
  j["recall"] = recalls_to_json(rep.recalls);
  if (rep.pseudo_labels) {
    const auto& m = *rep.pseudo_labels;
    j["pseudo_labels"] = {{"match_count", m.match_count}, {"true_positives", m.true_positives},
                          {"gt_count", m.gt_count},       {"gt_covered", m.gt_covered},
                          {"precision", m.precision},     {"recall", m.recall},
                          {"f1", m.f1}};
  }
  j["pa_scores"] = {{"mean_pos", rep.mean_pa_pos},
                    {"mean_neg", rep.mean_pa_neg},
                    {"gap", rep.mean_pa_pos - rep.mean_pa_neg},
                    {"pos_pairs", rep.pos_pairs},
                    {"neg_pairs", rep.neg_pairs}};
  auto& ni = j["ni_ratio"] = nlohmann::json::array();
  for (const auto& c : rep.ni) ni.push_back({{"clip_id", c.clip_id}, {"ni_ratio", c.ni_ratio}});
  auto& subsets = j["subsets"] = nlohmann::json::object();
  for (const auto& s : rep.subsets)
    subsets[s.name] = {{"clips", s.clip_ids}, {"recall", recalls_to_json(s.recalls)}};
  return j;
}

void write_report(const std::filesystem::path& dir, const EvalReport& rep) {
  std::filesystem::create_directories(dir);
  io::write_json_file(dir / "report.json", report_to_json(rep));

  std::ofstream metrics(dir / "metrics.csv");
  if (!metrics) throw scene::DataError("cannot write " + (dir / "metrics.csv").string());
  metrics << "subset,protocol,k,recall\n" << std::setprecision(10);
  for (const auto& r : rep.recalls) metrics << "all," << to_string(r.protocol) << ',' << r.k << ',' << r.recall << '\n';
  for (const auto& s : rep.subsets)
    for (const auto& r : s.recalls)
      metrics << s.name << ',' << to_string(r.protocol) << ',' << r.k << ',' << r.recall << '\n';

  std::ofstream hist(dir / "histograms.csv");
  if (!hist) throw scene::DataError("cannot write " + (dir / "histograms.csv").string());
  hist << "bin_lo,bin_hi,pos_count,neg_count\n" << std::setprecision(10);
  for (const auto& b : rep.pa_histogram) hist << b.lo << ',' << b.hi << ',' << b.pos << ',' << b.neg << '\n';
}

std::size_t test_split_begin(std::size_t n_clips, double test_fraction) {
  const auto n_test = static_cast<std::size_t>(std::ceil(static_cast<double>(n_clips) * test_fraction));
  return n_clips - std::min(n_clips, n_test);
}

}  // namespace pavsgg::eval
