#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "pavsgg/ablation.hpp"
#include "pavsgg/config.hpp"
#include "pavsgg/dataset_io.hpp"
#include "pavsgg/evalrank.hpp"
#include "pavsgg/gradcheck_suite.hpp"
#include "pavsgg/pipeline.hpp"
#include "pavsgg/ram.hpp"
#include "pavsgg/relnet.hpp"

namespace fs = std::filesystem;
using namespace pavsgg;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitGradcheck = 3;

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c, bool out_required = true) {
  cmd->add_option("--config", c.config_path, "Run configuration JSON (defaults when omitted)")
      ->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "Override every seed in the configuration");
  auto* out = cmd->add_option("--out", c.out, "Output directory");
  if (out_required) out->required();
}

config::RunConfig load_config(const Common& c) {
  config::RunConfig cfg;
  if (!c.config_path.empty()) {
    cfg = config::load_run_config(c.config_path);
  } else {
    cfg.apply_seed(cfg.seed);
  }
  if (c.seed) cfg.apply_seed(*c.seed);
  cfg.validate();
  return cfg;
}

void write_run_json(const fs::path& dir, const std::string& command, const config::RunConfig& cfg,
                    json args) {
  fs::create_directories(dir);
  io::write_json_file(dir / "run.json",
                      {{"command", command}, {"seed", cfg.seed}, {"args", std::move(args)}, {"config", config::to_json(cfg)}});
}

std::vector<const scene::VideoClip*> select_split(const io::Dataset& data, const std::string& split,
                                                  double test_fraction) {
  if (split == "all") {
    std::vector<const scene::VideoClip*> all;
    for (const auto& c : data.clips) all.push_back(&c);
    return all;
  }
  auto s = ablation::split(data, test_fraction);
  return split == "train" ? s.train : s.test;
}

int cmd_gen_data(const Common& c) {
  const auto cfg = load_config(c);
  const auto data = io::generate_dataset(cfg.gen);
  io::write_dataset(c.out, data);
  write_run_json(c.out, "gen-data", cfg, json::object());
  std::cout << "wrote " << data.clips.size() << " clips and " << data.attention.size()
            << " attention maps to " << c.out << "\n";
  return kExitOk;
}

int cmd_ram_match(const Common& c, const std::string& data_dir) {
  const auto cfg = load_config(c);
  const auto data = io::load_dataset(data_dir);
  if (data.clips.empty()) throw scene::DataError("no clips in " + data_dir);
  fs::create_directories(c.out);
  json parts = json::array();
  std::vector<ram::PseudoLabelMetrics> per_clip;
  std::ofstream csv(fs::path(c.out) / "metrics.csv");
  csv << "clip_id,match_count,tp,precision,recall,f1\n" << std::setprecision(10);
  for (const auto& clip : data.clips) {
    const auto p = ram::match_clip(clip, data.attention, cfg.ram);
    parts.push_back(ram::partition_to_json(clip.clip_id, p));
    if (clip.middle().oracle_gt) {
      const auto m = ram::pseudo_label_metrics(p, clip.middle());
      per_clip.push_back(m);
      csv << clip.clip_id << ',' << m.match_count << ',' << m.true_positives << ',' << m.precision << ','
          << m.recall << ',' << m.f1 << '\n';
    }
  }
  io::write_json_file(fs::path(c.out) / "partitions.json", parts);
  const auto total = ram::aggregate(per_clip);
  io::write_json_file(fs::path(c.out) / "summary.json",
                      {{"clips", data.clips.size()},
                       {"match_count", total.match_count},
                       {"true_positives", total.true_positives},
                       {"gt_count", total.gt_count},
                       {"precision", total.precision},
                       {"recall", total.recall},
                       {"f1", total.f1},
                       {"seed", cfg.seed}});
  write_run_json(c.out, "ram-match", cfg, {{"data", data_dir}});
  std::cout << "matched " << data.clips.size() << " clips: |P+|=" << total.match_count
            << " precision=" << total.precision << " recall=" << total.recall << "\n";
  return kExitOk;
}

int cmd_train(const Common& c, const std::string& data_dir, int step, const std::string& teacher_dir) {
  const auto cfg = load_config(c);
  if (step == 2 && teacher_dir.empty()) throw CLI::ValidationError("--teacher", "step 2 needs --teacher");
  const auto data = io::load_dataset(data_dir);
  const auto split = ablation::split(data, cfg.eval.test_fraction);
  pipeline::TrainingSet train{split.train, ablation::match_all(split.train, data.attention, cfg.ram)};
  pipeline::TrainResult result = [&] {
    if (step == 1) return pipeline::train_step1(train, cfg.model, cfg.loss, cfg.train, cfg.ram.subject_class);
    const auto teacher = relnet::load_model(teacher_dir);
    return pipeline::train_step2(train, teacher, cfg.loss, cfg.train, cfg.ram.subject_class);
  }();
  relnet::save_model(c.out, result.model);
  pipeline::write_log_csv(fs::path(c.out) / "train_log.csv", result.log);
  write_run_json(c.out, "train", cfg, {{"data", data_dir}, {"step", step}, {"teacher", teacher_dir}});
  for (const auto& e : result.log)
    std::cout << "epoch " << e.epoch << " total=" << e.loss.total << " rel=" << e.loss.rel
              << " pa=" << e.loss.pa << " pam=" << e.loss.pam << "\n";
  return kExitOk;
}

std::optional<bool> on_off(const std::string& v) {
  if (v.empty()) return std::nullopt;
  return v == "on";
}

int cmd_eval(const Common& c, const std::string& data_dir, const std::string& ckpt, const std::string& pa,
             const std::string& pam, const std::string& split_name) {
  auto cfg = load_config(c);
  if (auto v = on_off(pa)) cfg.eval.pa_scoring = *v;
  if (auto v = on_off(pam)) cfg.eval.pam = *v;
  const auto model = relnet::load_model(ckpt);
  const auto data = io::load_dataset(data_dir);
  const auto clips = select_split(data, split_name, cfg.eval.test_fraction);
  const auto parts = ablation::match_all(clips, data.attention, cfg.ram);
  const auto report = eval::evaluate(clips, model, cfg.eval, cfg.ram.subject_class, &parts);
  eval::write_report(c.out, report);
  write_run_json(c.out, "eval", cfg,
                 {{"data", data_dir}, {"ckpt", ckpt}, {"pa", cfg.eval.pa_scoring}, {"pam", cfg.eval.pam},
                  {"split", split_name}});
  for (const auto& r : report.recalls)
    std::cout << eval::to_string(r.protocol) << " R@" << r.k << " = " << r.recall << "\n";
  return kExitOk;
}

int cmd_gradcheck(const Common& c, int seeds, double tol) {
  const auto cfg = load_config(c);
  const auto rep = gradcheck::run_suite(seeds, tol);
  json entries = json::array();
  for (const auto& e : rep.entries) {
    std::cout << (e.passed ? "ok   " : "FAIL ") << std::left << std::setw(24) << e.name
              << " max_rel_err=" << std::scientific << std::setprecision(3) << e.max_relative_error
              << std::defaultfloat << " coords=" << e.coordinates << "\n";
    entries.push_back({{"name", e.name},
                       {"max_relative_error", e.max_relative_error},
                       {"coordinates", e.coordinates},
                       {"passed", e.passed}});
  }
  std::cout << (rep.passed() ? "gradcheck passed" : "gradcheck FAILED") << " (tolerance " << tol << ")\n";
  if (!c.out.empty()) {
    fs::create_directories(c.out);
    io::write_json_file(fs::path(c.out) / "gradcheck.json",
                        {{"tolerance", tol}, {"seeds", seeds}, {"passed", rep.passed()}, {"entries", entries}});
    write_run_json(c.out, "gradcheck", cfg, {{"seeds", seeds}, {"tol", tol}});
  }
  return rep.passed() ? kExitOk : kExitGradcheck;
}

ablation::Variant parse_combo(const std::string& spec) {
  ablation::Variant v{'*', false, false, false};
  if (spec != "none") {
    std::stringstream ss(spec);
    std::string part;
    while (std::getline(ss, part, '+')) {
      if (part == "ram") v.ram = true;
      else if (part == "pals") v.pals = true;
      else if (part == "pam") v.pam = true;
      else throw CLI::ValidationError("--combo", "unknown component '" + part + "' (ram, pals, pam, none)");
    }
  }
  ablation::check_variant(v.ram, v.pals, v.pam);
  for (const auto& row : ablation::table_rows())
    if (row.ram == v.ram && row.pals == v.pals && row.pam == v.pam) v.label = row.label;
  return v;
}

int cmd_ablate(const Common& c, const std::string& data_dir, const std::string& rows,
               const std::vector<std::string>& combos) {
  const auto cfg = load_config(c);
  std::vector<ablation::Variant> variants;
  for (char ch : rows) {
    if (ch == ',' || ch == ' ') continue;
    try {
      variants.push_back(ablation::variant_for(ch));
    } catch (const std::invalid_argument& e) {
      throw CLI::ValidationError("--rows", e.what());
    }
  }
  // An unsupported component combination is a configuration error, not a usage error.
  for (const auto& s : combos) variants.push_back(parse_combo(s));
  if (variants.empty()) variants = ablation::table_rows();
  const auto data = data_dir.empty() ? io::generate_dataset(cfg.gen) : io::load_dataset(data_dir);
  const auto table = ablation::run_ablation(data, cfg, variants);
  fs::create_directories(c.out);
  ablation::write_table_csv(fs::path(c.out) / "ablation.csv", table, cfg);
  write_run_json(c.out, "ablate", cfg, {{"data", data_dir}, {"rows", rows}, {"combos", combos}});
  for (const auto& r : table)
    std::cout << "(" << r.variant.label << ") RAM=" << r.variant.ram << " PALS=" << r.variant.pals
              << " PAM=" << r.variant.pam << " R@10 wc=" << r.report.recall(eval::Protocol::WithConstraint, 10)
              << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Weakly-supervised video scene graph generation with pair affinity"};
  app.require_subcommand(1);

  Common gen_c, ram_c, train_c, eval_c, grad_c, abl_c;
  std::string ram_data, train_data, eval_data, abl_data, teacher, ckpt, pa, pam, split = "test", rows;
  std::vector<std::string> combos;
  int step = 1, seeds = 10;
  double tol = 1e-4;

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic corpus with attention maps");
  add_common(gen, gen_c);

  auto* rm = app.add_subcommand("ram-match", "Build pseudo-label partitions and their quality metrics");
  add_common(rm, ram_c);
  rm->add_option("--data", ram_data, "Dataset directory")->required();

  auto* tr = app.add_subcommand("train", "Train the teacher (step 1) or the student (step 2)");
  add_common(tr, train_c);
  tr->add_option("--data", train_data, "Dataset directory")->required();
  tr->add_option("--step", step, "Training step")->check(CLI::IsMember({1, 2}));
  tr->add_option("--teacher", teacher, "Teacher checkpoint directory (step 2)");

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
  add_common(ev, eval_c);
  ev->add_option("--data", eval_data, "Dataset directory")->required();
  ev->add_option("--ckpt", ckpt, "Checkpoint directory")->required();
  ev->add_option("--pa", pa, "Pair affinity in the ranking score")->check(CLI::IsMember({"on", "off"}));
  ev->add_option("--pam", pam, "Affinity gating in the forward pass")->check(CLI::IsMember({"on", "off"}));
  ev->add_option("--split", split, "Clips to evaluate")->check(CLI::IsMember({"test", "train", "all"}));

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  add_common(gc, grad_c, false);
  gc->add_option("--seeds", seeds, "Random seeds per primitive")->check(CLI::PositiveNumber);
  gc->add_option("--tol", tol, "Maximum relative error")->check(CLI::PositiveNumber);

  auto* ab = app.add_subcommand("ablate", "Component ablation table");
  add_common(ab, abl_c);
  ab->add_option("--data", abl_data, "Dataset directory (generated from the config when omitted)");
  ab->add_option("--rows", rows, "Table rows to run, e.g. af (default: all of a-f)");
  ab->add_option("--combo", combos, "Extra component combination such as ram+pals, or none");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen) return cmd_gen_data(gen_c);
    if (*rm) return cmd_ram_match(ram_c, ram_data);
    if (*tr) return cmd_train(train_c, train_data, step, teacher);
    if (*ev) return cmd_eval(eval_c, eval_data, ckpt, pa, pam, split);
    if (*gc) return cmd_gradcheck(grad_c, seeds, tol);
    if (*ab) return cmd_ablate(abl_c, abl_data, rows, combos);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
