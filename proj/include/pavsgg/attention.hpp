#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "pavsgg/scene.hpp"

namespace pavsgg::scene {

// Nonnegative H x W grid standing in for a grounding model's [CLS]
// cross-attention, stored row-major.
class AttentionMap {
 public:
  AttentionMap() = default;
  AttentionMap(int height, int width, double fill = 0.0);
  AttentionMap(int height, int width, std::vector<double> values);

  int height() const { return height_; }
  int width() const { return width_; }
  double& at(int row, int col) { return values_[static_cast<std::size_t>(row * width_ + col)]; }
  double at(int row, int col) const { return values_[static_cast<std::size_t>(row * width_ + col)]; }
  const std::vector<double>& values() const { return values_; }
  std::vector<double>& values() { return values_; }

  double total_mass() const;
  // Throws DataError on negative or non-finite cells.
  void validate() const;

  friend bool operator==(const AttentionMap&, const AttentionMap&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<double> values_;
};

// Row-major indices of the cells whose centers fall inside `box`
// (half-open: x1 <= cx < x2, y1 <= cy < y2) for a kImageSize square image.
std::vector<std::size_t> cells_in_box(int height, int width, const BoundingBox& box);

enum class EntitySide { Subject, Object };

const char* to_string(EntitySide side);
EntitySide entity_side_from_string(const std::string& s);

// Quality 1 gives a sharp bump on the relation-consistent instance; lower
// quality leaks mass to same-class look-alikes and uniform background; quality
// 0 is exactly uniform. An entity class absent from the frame yields a
// near-uniform map.
AttentionMap synthesize_attention(const Frame& frame, const UnlocalizedTriplet& triplet,
                                  EntitySide side, double quality, std::uint64_t seed,
                                  double peak_sharpness = 2.0, double distractor_leak = 0.5,
                                  int grid = kDefaultGrid);

struct AttentionKey {
  std::string clip_id;
  int t = 0;
  int annotation = 0;
  EntitySide side = EntitySide::Subject;

  friend auto operator<=>(const AttentionKey& a, const AttentionKey& b) {
    return std::tie(a.clip_id, a.t, a.annotation, a.side) <=>
           std::tie(b.clip_id, b.t, b.annotation, b.side);
  }
  friend bool operator==(const AttentionKey&, const AttentionKey&) = default;
};

using AttentionStore = std::map<AttentionKey, AttentionMap>;

// Maps for every (annotation, side) of the clip's middle frame, with per-entity
// quality drawn from the generator settings.
AttentionStore synthesize_clip_attention(const VideoClip& clip, const GenConfig& cfg,
                                         std::uint64_t seed);

}  // namespace pavsgg::scene
