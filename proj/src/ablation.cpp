#include "pavsgg/ablation.hpp"

#include <fstream>
#include <iomanip>
#include <stdexcept>

#include "pavsgg/parallel.hpp"

namespace pavsgg::ablation {

const std::vector<Variant>& table_rows() {
  static const std::vector<Variant> rows{
      {'a', false, false, false}, {'b', false, true, false}, {'c', false, true, true},
      {'d', true, false, false},  {'e', true, true, false},  {'f', true, true, true},
  };
  return rows;
}

Variant variant_for(char label) {
  for (const auto& v : table_rows())
    if (v.label == label) return v;
  throw std::invalid_argument(std::string("unknown ablation row '") + label + "' (expected a-f)");
}

void check_variant(bool /*ram*/, bool pals, bool pam) {
  if (pam && !pals) throw std::invalid_argument("PAM requires PALS: enable PALS or disable PAM");
}

config::RunConfig apply_variant(const config::RunConfig& base, const Variant& v) {
  check_variant(v.ram, v.pals, v.pam);
  config::RunConfig c = base;
  c.ram.enabled = base.ram.enabled && v.ram;
  if (!v.pals) {
    c.loss.lambda_pa = 0.0;
    c.eval.pa_scoring = false;
  }
  if (!v.pam) {
    c.loss.lambda_pam = 0.0;
    c.model.pam = false;
    c.eval.pam = false;
  }
  return c;
}

Split split(const io::Dataset& data, double test_fraction) {
  Split s;
  const std::size_t begin = eval::test_split_begin(data.clips.size(), test_fraction);
  for (std::size_t i = 0; i < data.clips.size(); ++i)
    (i < begin ? s.train : s.test).push_back(&data.clips[i]);
  return s;
}

std::vector<ram::MatchPartition> match_all(const std::vector<const scene::VideoClip*>& clips,
                                           const scene::AttentionStore& attention,
                                           const ram::RamConfig& cfg) {
  std::vector<ram::MatchPartition> out(clips.size());
  parallel_for(clips.size(), [&](std::size_t i) { out[i] = ram::match_clip(*clips[i], attention, cfg); });
  return out;
}

RunResult run_pipeline(const io::Dataset& data, const config::RunConfig& cfg) {
  const auto parts = split(data, cfg.eval.test_fraction);
  if (parts.train.empty()) throw scene::DataError("training split is empty");
  if (parts.test.empty()) throw scene::DataError("test split is empty");
  pipeline::TrainingSet train{parts.train, match_all(parts.train, data.attention, cfg.ram)};
  const int subj = cfg.ram.subject_class;
  auto teacher = pipeline::train_step1(train, cfg.model, cfg.loss, cfg.train, subj);
  auto student = pipeline::train_step2(train, teacher.model, cfg.loss, cfg.train, subj);
  const auto test_parts = match_all(parts.test, data.attention, cfg.ram);
  auto report = eval::evaluate(parts.test, student.model, cfg.eval, subj, &test_parts);
  return {std::move(teacher), std::move(student), std::move(report)};
}

std::vector<Row> run_ablation(const io::Dataset& data, const config::RunConfig& cfg,
                              const std::vector<Variant>& variants) {
  std::vector<Row> rows;
  for (const auto& v : variants) check_variant(v.ram, v.pals, v.pam);
  for (const auto& v : variants) rows.push_back({v, run_pipeline(data, apply_variant(cfg, v)).report});
  return rows;
}

void write_table_csv(const std::filesystem::path& path, const std::vector<Row>& rows,
                     const config::RunConfig& cfg) {
  std::ofstream os(path);
  if (!os) throw scene::DataError("cannot write " + path.string());
  os << "row,RAM,PALS,PAM";
  for (auto p : {eval::Protocol::WithConstraint, eval::Protocol::NoConstraint})
    for (int k : cfg.eval.ks) os << ',' << eval::to_string(p) << "_R@" << k;
  os << ",pl_precision,pl_recall,pl_f1,seed\n" << std::setprecision(10);
  for (const auto& r : rows) {
    os << r.variant.label << ',' << r.variant.ram << ',' << r.variant.pals << ',' << r.variant.pam;
    for (auto p : {eval::Protocol::WithConstraint, eval::Protocol::NoConstraint})
      for (int k : cfg.eval.ks) os << ',' << r.report.recall(p, k);
    const auto pl = r.report.pseudo_labels.value_or(ram::PseudoLabelMetrics{});
    os << ',' << pl.precision << ',' << pl.recall << ',' << pl.f1 << ',' << cfg.seed << '\n';
  }
}

}  // namespace pavsgg::ablation
