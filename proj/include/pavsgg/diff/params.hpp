#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "pavsgg/diff/tensor.hpp"

namespace pavsgg::diff {

// A trainable parameter with its gradient accumulator and Adam moments.
struct Param {
  std::string name;
  Tensor value;
  Tensor grad;
  Tensor first_moment;
  Tensor second_moment;
};

// Named parameters in insertion order. Addresses are stable for the lifetime
// of the store, so tapes may hold pointers to entries.
class ParamStore {
 public:
  ParamStore() = default;
  ParamStore(const ParamStore& other);
  ParamStore& operator=(const ParamStore& other);
  ParamStore(ParamStore&&) = default;
  ParamStore& operator=(ParamStore&&) = default;

  Param& add(const std::string& name, Tensor value);
  Param& get(const std::string& name);
  const Param& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::size_t size() const { return params_.size(); }
  std::size_t total_values() const;

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  void zero_grad();

  // Optimizer steps taken so far; persisted with checkpoints.
  std::int64_t step = 0;

 private:
  void rebuild_index();

  std::deque<Param> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Checkpoint layout: <dir>/manifest.json lists names, shapes, byte offsets and
// the optimizer step; <dir>/params.bin holds the raw little-endian f64 values
// of every parameter, concatenated in manifest order.
void save_checkpoint(const std::filesystem::path& dir, const ParamStore& store);

// Loads values into an existing store. Names and shapes must match exactly.
void load_checkpoint(const std::filesystem::path& dir, ParamStore& store);

}  // namespace pavsgg::diff
