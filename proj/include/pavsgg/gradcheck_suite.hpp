#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pavsgg/losses.hpp"
#include "pavsgg/relnet.hpp"
#include "pavsgg/scene.hpp"

namespace pavsgg::gradcheck {

struct CheckEntry {
  std::string name;
  double max_relative_error = 0.0;
  std::size_t coordinates = 0;
  bool passed = false;
};

struct SuiteReport {
  std::vector<CheckEntry> entries;
  double tolerance = 1e-4;
  double seconds = 0.0;
  bool passed() const;
};

// Every primitive op on random shapes (each axis <= 8) for `seeds` seeds,
// reported as one entry per op holding the worst seed.
std::vector<CheckEntry> check_primitives(int seeds, double tolerance, std::uint64_t base_seed = 1);

// Two frames sharing one person: three candidate pairs in total, two of them
// labeled so every loss term is active.
scene::VideoClip toy_clip();
relnet::ModelConfig toy_model_config();

// Total loss (relation + PA + PAM terms) over the toy clip with a fixed
// partition per frame, through both gated attention blocks.
CheckEntry check_end_to_end(double tolerance, const loss::LossConfig& loss_cfg = {});

SuiteReport run_suite(int seeds = 10, double tolerance = 1e-4);

}  // namespace pavsgg::gradcheck
