#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "pavsgg/config.hpp"
#include "pavsgg/dataset_io.hpp"
#include "pavsgg/evalrank.hpp"
#include "pavsgg/pipeline.hpp"

// End-to-end runs (match, two training steps, evaluation) and the component
// ablation table built from them.
namespace pavsgg::ablation {

struct Variant {
  char label = 'f';
  bool ram = true;
  bool pals = true;
  bool pam = true;
};

// Rows (a)-(f): none, PALS, PALS+PAM, RAM, RAM+PALS, RAM+PALS+PAM.
const std::vector<Variant>& table_rows();
// Throws std::invalid_argument for labels outside a-f.
Variant variant_for(char label);
// Throws std::invalid_argument when PAM is requested without PALS.
void check_variant(bool ram, bool pals, bool pam);

// RAM off: class-level matching. PALS off: no PA loss, no PA scoring.
// PAM off: no gating, no triplet loss.
config::RunConfig apply_variant(const config::RunConfig& base, const Variant& v);

struct Split {
  std::vector<const scene::VideoClip*> train;
  std::vector<const scene::VideoClip*> test;
};
Split split(const io::Dataset& data, double test_fraction);

std::vector<ram::MatchPartition> match_all(const std::vector<const scene::VideoClip*>& clips,
                                           const scene::AttentionStore& attention,
                                           const ram::RamConfig& cfg);

struct RunResult {
  pipeline::TrainResult teacher;
  pipeline::TrainResult student;
  eval::EvalReport report;  // student on the test split
};

RunResult run_pipeline(const io::Dataset& data, const config::RunConfig& cfg);

struct Row {
  Variant variant;
  eval::EvalReport report;
};

std::vector<Row> run_ablation(const io::Dataset& data, const config::RunConfig& cfg,
                              const std::vector<Variant>& variants);

// Columns: row, RAM, PALS, PAM, then R@K per protocol, then pseudo-label
// precision/recall/F1 and the seed.
void write_table_csv(const std::filesystem::path& path, const std::vector<Row>& rows,
                     const config::RunConfig& cfg);

}  // namespace pavsgg::ablation
