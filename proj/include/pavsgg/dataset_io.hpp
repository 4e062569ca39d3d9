#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "pavsgg/attention.hpp"
#include "pavsgg/scene.hpp"

namespace pavsgg::io {

using nlohmann::json;

// One document per clip:
// {clip_id, frames:[{t, detections:[{id, box:[x1,y1,x2,y2], class_id, confidence,
//  feature:[...]}], oracle_gt:[...]?}], middle_index, annotations:[[s,p,o],...]}
json clip_to_json(const scene::VideoClip& clip);
scene::VideoClip clip_from_json(const json& j);

// Sidecar {h, w, values:[row-major]}.
json attention_to_json(const scene::AttentionMap& map);
scene::AttentionMap attention_from_json(const json& j);

struct Dataset {
  std::vector<scene::VideoClip> clips;
  scene::AttentionStore attention;
};

// Synthetic corpus plus the attention maps of every middle-frame annotation.
Dataset generate_dataset(const scene::GenConfig& cfg);

std::string clip_filename(const std::string& clip_id);
std::string attention_filename(const scene::AttentionKey& key);

// Writes <clip_id>.json for every clip plus one
// <clip_id>.t<t>.a<k>.<side>.attn.json per attention map.
void write_dataset(const std::filesystem::path& dir, const Dataset& data);

// Reads every clip and sidecar in `dir`; clips sorted by clip_id. Throws
// scene::DataError on malformed files.
Dataset load_dataset(const std::filesystem::path& dir);

// Serializes with a trailing newline. Doubles are written round-trip exact.
void write_json_file(const std::filesystem::path& path, const json& j);
json read_json_file(const std::filesystem::path& path);

}  // namespace pavsgg::io
