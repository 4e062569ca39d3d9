#include "pavsgg/config.hpp"

#include <fstream>
#include <set>

#include "pavsgg/dataset_io.hpp"

namespace pavsgg::config {

namespace {

// Reads fields of one JSON object and remembers which keys were consumed so
// that leftovers can be reported.
class Reader {
 public:
  Reader(const json& j, std::string section) : j_(j), section_(std::move(section)) {
    if (!j_.is_object()) throw ConfigError(where() + "expected a JSON object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!it->is_boolean()) throw ConfigError("not a boolean");
      } else if constexpr (std::is_integral_v<T>) {
        if (!it->is_number_integer()) throw ConfigError("not an integer");
        if constexpr (std::is_unsigned_v<T>) {
          if (it->is_number_integer() && !it->is_number_unsigned() && it->template get<std::int64_t>() < 0)
            throw ConfigError("must be non-negative");
        }
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!it->is_number()) throw ConfigError("not a number");
      }
      out = it->template get<T>();
    } catch (const ConfigError& e) {
      throw ConfigError(where() + "key '" + key + "': " + e.what());
    } catch (const json::exception& e) {
      throw ConfigError(where() + "key '" + key + "': " + e.what());
    }
  }

  const json* child(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw ConfigError(where() + "unknown key '" + k + "'");
  }

 private:
  std::string where() const { return "config" + (section_.empty() ? "" : " section '" + section_ + "'") + ": "; }

  const json& j_;
  std::string section_;
  std::set<std::string> seen_;
};

template <typename F>
void validated(F&& f) {
  try {
    f();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

}  // namespace

const char* to_string(loss::MarginMode m) {
  switch (m) {
    case loss::MarginMode::Hard: return "hard";
    case loss::MarginMode::Soft: return "soft";
    case loss::MarginMode::Adaptive: return "adaptive";
  }
  return "hard";
}

const char* to_string(loss::PaBceMode m) {
  return m == loss::PaBceMode::Balanced ? "balanced" : "standard";
}

loss::MarginMode margin_mode_from_string(const std::string& s) {
  if (s == "hard") return loss::MarginMode::Hard;
  if (s == "soft") return loss::MarginMode::Soft;
  if (s == "adaptive") return loss::MarginMode::Adaptive;
  throw ConfigError("unknown margin mode '" + s + "' (hard|soft|adaptive)");
}

loss::PaBceMode pa_bce_mode_from_string(const std::string& s) {
  if (s == "balanced") return loss::PaBceMode::Balanced;
  if (s == "standard") return loss::PaBceMode::Standard;
  throw ConfigError("unknown PA BCE mode '" + s + "' (balanced|standard)");
}

json to_json(const scene::GenConfig& c) {
  return {{"clips", c.clips},
          {"frames_per_clip", c.frames_per_clip},
          {"interactive_triplets", c.interactive_triplets},
          {"distractors_per_frame", c.distractors_per_frame},
          {"num_classes", c.num_classes},
          {"num_predicates", c.num_predicates},
          {"feature_dim", c.feature_dim},
          {"feature_noise", c.feature_noise},
          {"predicate_regularity", c.predicate_regularity},
          {"box_jitter", c.box_jitter},
          {"motion", c.motion},
          {"interactive_conf_lo", c.interactive_conf_lo},
          {"interactive_conf_hi", c.interactive_conf_hi},
          {"distractor_conf_lo", c.distractor_conf_lo},
          {"distractor_conf_hi", c.distractor_conf_hi},
          {"peak_sharpness", c.peak_sharpness},
          {"distractor_leak", c.distractor_leak},
          {"attention_quality_lo", c.attention_quality_lo},
          {"attention_quality_hi", c.attention_quality_hi},
          {"vl_failure", c.vl_failure},
          {"attention_grid", c.attention_grid},
          {"duplicate_instance", c.duplicate_instance},
          {"seed", c.seed}};
}

scene::GenConfig gen_config_from_json(const json& j) {
  scene::GenConfig c;
  Reader r(j, "gen");
  r.get("clips", c.clips);
  r.get("frames_per_clip", c.frames_per_clip);
  r.get("interactive_triplets", c.interactive_triplets);
  r.get("distractors_per_frame", c.distractors_per_frame);
  r.get("num_classes", c.num_classes);
  r.get("num_predicates", c.num_predicates);
  r.get("feature_dim", c.feature_dim);
  r.get("feature_noise", c.feature_noise);
  r.get("predicate_regularity", c.predicate_regularity);
  r.get("box_jitter", c.box_jitter);
  r.get("motion", c.motion);
  r.get("interactive_conf_lo", c.interactive_conf_lo);
  r.get("interactive_conf_hi", c.interactive_conf_hi);
  r.get("distractor_conf_lo", c.distractor_conf_lo);
  r.get("distractor_conf_hi", c.distractor_conf_hi);
  r.get("peak_sharpness", c.peak_sharpness);
  r.get("distractor_leak", c.distractor_leak);
  r.get("attention_quality_lo", c.attention_quality_lo);
  r.get("attention_quality_hi", c.attention_quality_hi);
  r.get("vl_failure", c.vl_failure);
  r.get("attention_grid", c.attention_grid);
  r.get("duplicate_instance", c.duplicate_instance);
  r.get("seed", c.seed);
  r.finish();
  validated([&] { c.validate(); });
  return c;
}

json to_json(const ram::RamConfig& c) {
  return {{"tau_r", c.tau_r}, {"tau_gs", c.tau_gs}, {"enabled", c.enabled}, {"subject_class", c.subject_class}};
}

ram::RamConfig ram_config_from_json(const json& j) {
  ram::RamConfig c;
  Reader r(j, "ram");
  r.get("tau_r", c.tau_r);
  r.get("tau_gs", c.tau_gs);
  r.get("enabled", c.enabled);
  r.get("subject_class", c.subject_class);
  r.finish();
  validated([&] { c.validate(); });
  return c;
}

json to_json(const relnet::ModelConfig& c) {
  return {{"d_v", c.d_v},
          {"d_c", c.d_c},
          {"d_r", c.d_r},
          {"d_p", c.d_p},
          {"d_k", c.d_k},
          {"layers", c.layers},
          {"num_predicates", c.num_predicates},
          {"num_classes", c.num_classes},
          {"temporal_window", c.temporal_window},
          {"pam", c.pam},
          {"seed", c.seed}};
}

relnet::ModelConfig model_config_from_json(const json& j) {
  relnet::ModelConfig c;
  Reader r(j, "model");
  r.get("d_v", c.d_v);
  r.get("d_c", c.d_c);
  r.get("d_r", c.d_r);
  r.get("d_p", c.d_p);
  r.get("d_k", c.d_k);
  r.get("layers", c.layers);
  r.get("num_predicates", c.num_predicates);
  r.get("num_classes", c.num_classes);
  r.get("temporal_window", c.temporal_window);
  r.get("pam", c.pam);
  r.get("seed", c.seed);
  r.finish();
  validated([&] { c.validate(); });
  return c;
}

json to_json(const loss::LossConfig& c) {
  return {{"lambda_pa", c.lambda_pa},
          {"lambda_pam", c.lambda_pam},
          {"margin", c.margin},
          {"margin_mode", to_string(c.margin_mode)},
          {"alpha", c.alpha},
          {"pa_bce", to_string(c.pa_bce)},
          {"triplet_cap", c.triplet_cap}};
}

loss::LossConfig loss_config_from_json(const json& j) {
  loss::LossConfig c;
  Reader r(j, "loss");
  r.get("lambda_pa", c.lambda_pa);
  r.get("lambda_pam", c.lambda_pam);
  r.get("margin", c.margin);
  std::string margin_mode = to_string(c.margin_mode), pa_bce = to_string(c.pa_bce);
  r.get("margin_mode", margin_mode);
  r.get("pa_bce", pa_bce);
  c.margin_mode = margin_mode_from_string(margin_mode);
  c.pa_bce = pa_bce_mode_from_string(pa_bce);
  r.get("alpha", c.alpha);
  r.get("triplet_cap", c.triplet_cap);
  r.finish();
  validated([&] { c.validate(); });
  return c;
}

json to_json(const pipeline::TrainConfig& c) {
  return {{"lr", c.lr},       {"epochs", c.epochs}, {"seed", c.seed},
          {"beta1", c.beta1}, {"beta2", c.beta2},   {"eps", c.eps},
          {"weight_decay", c.weight_decay}};
}

pipeline::TrainConfig train_config_from_json(const json& j) {
  pipeline::TrainConfig c;
  Reader r(j, "train");
  r.get("lr", c.lr);
  r.get("epochs", c.epochs);
  r.get("seed", c.seed);
  r.get("beta1", c.beta1);
  r.get("beta2", c.beta2);
  r.get("eps", c.eps);
  r.get("weight_decay", c.weight_decay);
  r.finish();
  validated([&] { c.validate(); });
  return c;
}

json to_json(const eval::EvalConfig& c) {
  return {{"ks", c.ks},
          {"iou_threshold", c.iou_threshold},
          {"pa_scoring", c.pa_scoring},
          {"pam", c.pam},
          {"test_fraction", c.test_fraction}};
}

eval::EvalConfig eval_config_from_json(const json& j) {
  eval::EvalConfig c;
  Reader r(j, "eval");
  if (const json* ks = r.child("ks")) {
    if (!ks->is_array()) throw ConfigError("config section 'eval': key 'ks' must be an array of integers");
    c.ks.clear();
    for (const auto& k : *ks) {
      if (!k.is_number_integer()) throw ConfigError("config section 'eval': key 'ks' must be an array of integers");
      c.ks.push_back(k.get<int>());
    }
  }
  r.get("iou_threshold", c.iou_threshold);
  r.get("pa_scoring", c.pa_scoring);
  r.get("pam", c.pam);
  r.get("test_fraction", c.test_fraction);
  r.finish();
  validated([&] { c.validate(); });
  return c;
}

void RunConfig::apply_seed(std::uint64_t s) {
  seed = s;
  gen.seed = s;
  model.seed = scene::clip_seed_for(s, 1u << 20);
  train.seed = scene::clip_seed_for(s, (1u << 20) + 1);
}

void RunConfig::validate() const {
  validated([&] {
    gen.validate();
    ram.validate();
    model.validate();
    loss.validate();
    train.validate();
    eval.validate();
  });
  if (model.d_v != gen.feature_dim)
    throw ConfigError("model.d_v (" + std::to_string(model.d_v) + ") must equal gen.feature_dim (" +
                      std::to_string(gen.feature_dim) + ")");
  if (model.num_classes != gen.num_classes)
    throw ConfigError("model.num_classes must equal gen.num_classes");
  if (model.num_predicates != gen.num_predicates)
    throw ConfigError("model.num_predicates must equal gen.num_predicates");
}

json to_json(const RunConfig& c) {
  return {{"seed", c.seed},         {"gen", to_json(c.gen)},     {"ram", to_json(c.ram)},
          {"model", to_json(c.model)}, {"loss", to_json(c.loss)}, {"train", to_json(c.train)},
          {"eval", to_json(c.eval)}};
}

RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  c.apply_seed(c.seed);
  Reader r(j, "");
  if (const json* s = r.child("gen")) c.gen = gen_config_from_json(*s);
  if (const json* s = r.child("ram")) c.ram = ram_config_from_json(*s);
  if (const json* s = r.child("model")) c.model = model_config_from_json(*s);
  if (const json* s = r.child("loss")) c.loss = loss_config_from_json(*s);
  if (const json* s = r.child("train")) c.train = train_config_from_json(*s);
  if (const json* s = r.child("eval")) c.eval = eval_config_from_json(*s);
  if (j.contains("seed")) {
    std::uint64_t seed = c.seed;
    r.get("seed", seed);
    c.apply_seed(seed);
  } else {
    r.get("seed", c.seed);
  }
  r.finish();
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  json j;
  try {
    j = io::read_json_file(path);
  } catch (const scene::DataError& e) {
    throw ConfigError(e.what());
  }
  return run_config_from_json(j);
}

}  // namespace pavsgg::config
