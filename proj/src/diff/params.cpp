#include "pavsgg/diff/params.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "json.hpp"

namespace pavsgg::diff {

ParamStore::ParamStore(const ParamStore& other)
    : step(other.step), params_(other.params_), index_(other.index_) {}

ParamStore& ParamStore::operator=(const ParamStore& other) {
  if (this != &other) {
    params_ = other.params_;
    index_ = other.index_;
    step = other.step;
  }
  return *this;
}

Param& ParamStore::add(const std::string& name, Tensor value) {
  if (contains(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  Param p;
  p.name = name;
  p.grad = Tensor(value.shape());
  p.first_moment = Tensor(value.shape());
  p.second_moment = Tensor(value.shape());
  p.value = std::move(value);
  params_.push_back(std::move(p));
  index_[name] = params_.size() - 1;
  return params_.back();
}

Param& ParamStore::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter: " + name);
  return params_[it->second];
}

const Param& ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter: " + name);
  return params_[it->second];
}

std::size_t ParamStore::total_values() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.numel();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p.grad.fill(0.0);
}

void ParamStore::rebuild_index() {
  index_.clear();
  for (std::size_t i = 0; i < params_.size(); ++i) index_[params_[i].name] = i;
}

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs are written in native order; big-endian hosts need a byte swap");

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, const ParamStore& store) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  manifest["format"] = "pavsgg-checkpoint-v1";
  manifest["optimizer_step"] = store.step;
  manifest["params"] = nlohmann::json::array();

  std::ofstream blob(dir / "params.bin", std::ios::binary | std::ios::trunc);
  if (!blob) throw CheckpointError("cannot write " + (dir / "params.bin").string());
  std::size_t offset = 0;
  for (const auto& p : store) {
    const auto bytes = p.value.numel() * sizeof(double);
    blob.write(reinterpret_cast<const char*>(p.value.data().data()),
               static_cast<std::streamsize>(bytes));
    manifest["params"].push_back(
        {{"name", p.name}, {"shape", p.value.shape()}, {"offset", offset}, {"bytes", bytes}});
    offset += bytes;
  }
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  if (!out) throw CheckpointError("cannot write " + (dir / "manifest.json").string());
  out << manifest.dump(2) << '\n';
}

void load_checkpoint(const std::filesystem::path& dir, ParamStore& store) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw CheckpointError("missing checkpoint manifest in " + dir.string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("malformed manifest: ") + e.what());
  }
  const auto& entries = manifest.at("params");
  if (entries.size() != store.size()) {
    throw CheckpointError("checkpoint has " + std::to_string(entries.size()) +
                          " parameters, model expects " + std::to_string(store.size()));
  }
  std::ifstream blob(dir / "params.bin", std::ios::binary);
  if (!blob) throw CheckpointError("missing params.bin in " + dir.string());

  std::size_t i = 0;
  for (auto& p : store) {
    const auto& e = entries[i++];
    const auto name = e.at("name").get<std::string>();
    const auto shape = e.at("shape").get<Shape>();
    if (name != p.name || shape != p.value.shape()) {
      throw CheckpointError("checkpoint entry " + name + shape_to_string(shape) +
                            " does not match model parameter " + p.name +
                            shape_to_string(p.value.shape()));
    }
    blob.seekg(static_cast<std::streamoff>(e.at("offset").get<std::size_t>()));
    blob.read(reinterpret_cast<char*>(p.value.data().data()),
              static_cast<std::streamsize>(p.value.numel() * sizeof(double)));
    if (!blob) throw CheckpointError("truncated params.bin at " + name);
  }
  store.step = manifest.value("optimizer_step", std::int64_t{0});
}

}  // namespace pavsgg::diff
