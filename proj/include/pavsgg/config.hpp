#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>

#include "json.hpp"
#include "pavsgg/evalrank.hpp"
#include "pavsgg/losses.hpp"
#include "pavsgg/pipeline.hpp"
#include "pavsgg/ram.hpp"
#include "pavsgg/relnet.hpp"
#include "pavsgg/scene.hpp"

namespace pavsgg::config {

using json = nlohmann::json;

// Malformed or invalid configuration. Derives from DataError so the CLI maps
// it to the data/config exit code.
class ConfigError : public scene::DataError {
 public:
  using scene::DataError::DataError;
};

struct RunConfig {
  std::uint64_t seed = 2024;
  scene::GenConfig gen;
  ram::RamConfig ram;
  relnet::ModelConfig model;
  loss::LossConfig loss;
  pipeline::TrainConfig train;
  eval::EvalConfig eval;

  // Derives every section seed from `seed`.
  void apply_seed(std::uint64_t s);
  // Throws ConfigError.
  void validate() const;
};

const char* to_string(loss::MarginMode m);
const char* to_string(loss::PaBceMode m);
loss::MarginMode margin_mode_from_string(const std::string& s);
loss::PaBceMode pa_bce_mode_from_string(const std::string& s);

json to_json(const scene::GenConfig& c);
json to_json(const ram::RamConfig& c);
json to_json(const relnet::ModelConfig& c);
json to_json(const loss::LossConfig& c);
json to_json(const pipeline::TrainConfig& c);
json to_json(const eval::EvalConfig& c);
json to_json(const RunConfig& c);

// Strict readers: unknown keys, wrong types and invalid values throw
// ConfigError. Missing keys keep their defaults.
scene::GenConfig gen_config_from_json(const json& j);
ram::RamConfig ram_config_from_json(const json& j);
relnet::ModelConfig model_config_from_json(const json& j);
loss::LossConfig loss_config_from_json(const json& j);
pipeline::TrainConfig train_config_from_json(const json& j);
eval::EvalConfig eval_config_from_json(const json& j);

// A top-level "seed" overrides the section seeds through apply_seed.
RunConfig run_config_from_json(const json& j);
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace pavsgg::config
