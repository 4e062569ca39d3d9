#include "pavsgg/attention.hpp"

#include <cmath>
#include <random>

namespace pavsgg::scene {

AttentionMap::AttentionMap(int height, int width, double fill)
    : height_(height), width_(width), values_(static_cast<std::size_t>(height * width), fill) {
  if (height < 1 || width < 1) throw DataError("attention map needs at least one cell");
}

AttentionMap::AttentionMap(int height, int width, std::vector<double> values)
    : height_(height), width_(width), values_(std::move(values)) {
  if (height < 1 || width < 1) throw DataError("attention map needs at least one cell");
  if (values_.size() != static_cast<std::size_t>(height * width)) {
    throw DataError("attention map of " + std::to_string(height) + "x" + std::to_string(width) +
                    " given " + std::to_string(values_.size()) + " values");
  }
}

double AttentionMap::total_mass() const {
  double s = 0.0;
  for (double v : values_) s += v;
  return s;
}

void AttentionMap::validate() const {
  for (double v : values_) {
    if (!std::isfinite(v) || v < 0.0) throw DataError("attention map has a negative or non-finite cell");
  }
}

std::vector<std::size_t> cells_in_box(int height, int width, const BoundingBox& box) {
  std::vector<std::size_t> cells;
  const double ch = kImageSize / height;
  const double cw = kImageSize / width;
  for (int i = 0; i < height; ++i) {
    const double cy = (i + 0.5) * ch;
    if (cy < box.y1 || cy >= box.y2) continue;
    for (int j = 0; j < width; ++j) {
      const double cx = (j + 0.5) * cw;
      if (cx >= box.x1 && cx < box.x2) cells.push_back(static_cast<std::size_t>(i * width + j));
    }
  }
  return cells;
}

const char* to_string(EntitySide side) { return side == EntitySide::Subject ? "subject" : "object"; }

EntitySide entity_side_from_string(const std::string& s) {
  if (s == "subject") return EntitySide::Subject;
  if (s == "object") return EntitySide::Object;
  throw DataError("unknown entity side: " + s);
}

namespace {

std::vector<double> bump(const BoundingBox& box, int grid, double sharpness) {
  const double cell = kImageSize / grid;
  const double cx = box.center_x() / cell - 0.5;
  const double cy = box.center_y() / cell - 0.5;
  const double sx = std::max(0.35, box.width() / cell / (2.0 * sharpness));
  const double sy = std::max(0.35, box.height() / cell / (2.0 * sharpness));
  std::vector<double> v(static_cast<std::size_t>(grid * grid));
  double total = 0.0;
  for (int i = 0; i < grid; ++i) {
    for (int j = 0; j < grid; ++j) {
      const double dx = (j - cx) / sx, dy = (i - cy) / sy;
      const double g = std::exp(-0.5 * (dx * dx + dy * dy));
      v[static_cast<std::size_t>(i * grid + j)] = g;
      total += g;
    }
  }
  for (auto& x : v) x /= total;
  return v;
}

}  // namespace

AttentionMap synthesize_attention(const Frame& frame, const UnlocalizedTriplet& triplet,
                                  EntitySide side, double quality, std::uint64_t seed,
                                  double peak_sharpness, double distractor_leak, int grid) {
  const int cls = side == EntitySide::Subject ? triplet.subject_class : triplet.object_class;
  const std::size_t n = static_cast<std::size_t>(grid * grid);
  const double uniform = 1.0 / static_cast<double>(n);
  std::mt19937_64 rng(seed);

  std::optional<BoundingBox> target;
  if (frame.oracle_gt) {
    for (const auto& g : *frame.oracle_gt) {
      if (g.subject.class_id == triplet.subject_class && g.object.class_id == triplet.object_class &&
          g.predicate == triplet.predicate) {
        target = side == EntitySide::Subject ? g.subject.box : g.object.box;
        break;
      }
    }
  }
  if (!target) {
    const Detection* best = nullptr;
    for (const auto& d : frame.detections)
      if (d.class_id == cls && (!best || d.id < best->id)) best = &d;
    if (best) target = best->box;
  }
  if (!target) {
    // Grounding failure: near-uniform with small seeded texture.
    std::uniform_real_distribution<double> jitter(0.99, 1.01);
    std::vector<double> v(n);
    for (auto& x : v) x = uniform * jitter(rng);
    return AttentionMap(grid, grid, std::move(v));
  }

  const auto peak = bump(*target, grid, peak_sharpness);
  std::vector<double> leak(n, 0.0);
  int leaked = 0;
  std::bernoulli_distribution leak_coin(distractor_leak);
  for (const auto& d : frame.detections) {
    if (d.class_id != cls || iou(d.box, *target) >= 0.5) continue;
    if (!leak_coin(rng)) continue;
    const auto b = bump(d.box, grid, peak_sharpness);
    for (std::size_t i = 0; i < n; ++i) leak[i] += b[i];
    ++leaked;
  }
  if (leaked == 0) {
    leak.assign(n, uniform);
  } else {
    for (auto& x : leak) x /= leaked;
  }

  const double q = quality;
  std::vector<double> v(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    v[i] = q * q * peak[i] + q * (1.0 - q) * leak[i] + (1.0 - q) * uniform;
    total += v[i];
  }
  for (auto& x : v) x /= total;
  return AttentionMap(grid, grid, std::move(v));
}

AttentionStore synthesize_clip_attention(const VideoClip& clip, const GenConfig& cfg,
                                         std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  AttentionStore store;
  const auto& frame = clip.middle();
  for (std::size_t a = 0; a < clip.annotations.size(); ++a) {
    for (EntitySide side : {EntitySide::Subject, EntitySide::Object}) {
      const bool failed = unit(rng) < cfg.vl_failure;
      const double q = failed ? 0.0
                              : cfg.attention_quality_lo +
                                    (cfg.attention_quality_hi - cfg.attention_quality_lo) * unit(rng);
      const std::uint64_t map_seed = rng();
      store[{clip.clip_id, clip.middle_index, static_cast<int>(a), side}] =
          synthesize_attention(frame, clip.annotations[a], side, q, map_seed, cfg.peak_sharpness,
                               cfg.distractor_leak, cfg.attention_grid);
    }
  }
  return store;
}

}  // namespace pavsgg::scene
