#include "pavsgg/dataset_io.hpp"

#include <algorithm>
#include <fstream>
#include <regex>

namespace pavsgg::io {

using scene::DataError;

namespace {

json box_to_json(const scene::BoundingBox& b) { return json::array({b.x1, b.y1, b.x2, b.y2}); }

scene::BoundingBox box_from_json(const json& j) {
  if (!j.is_array() || j.size() != 4) throw DataError("box must be [x1,y1,x2,y2]");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

json entity_to_json(const scene::GroundedEntity& e) {
  return {{"box", box_to_json(e.box)}, {"class_id", e.class_id}};
}

scene::GroundedEntity entity_from_json(const json& j) {
  return {box_from_json(j.at("box")), j.at("class_id").get<int>()};
}

}  // namespace

json clip_to_json(const scene::VideoClip& clip) {
  json frames = json::array();
  for (const auto& f : clip.frames) {
    json dets = json::array();
    for (const auto& d : f.detections) {
      dets.push_back({{"id", d.id},
                      {"box", box_to_json(d.box)},
                      {"class_id", d.class_id},
                      {"confidence", d.confidence},
                      {"feature", d.feature}});
    }
    json jf = {{"t", f.t}, {"detections", std::move(dets)}};
    if (f.oracle_gt) {
      json gt = json::array();
      for (const auto& g : *f.oracle_gt) {
        gt.push_back({{"subject", entity_to_json(g.subject)},
                      {"predicate", g.predicate},
                      {"object", entity_to_json(g.object)}});
      }
      jf["oracle_gt"] = std::move(gt);
    }
    frames.push_back(std::move(jf));
  }
  json ann = json::array();
  for (const auto& a : clip.annotations)
    ann.push_back(json::array({a.subject_class, a.predicate, a.object_class}));
  return {{"clip_id", clip.clip_id},
          {"frames", std::move(frames)},
          {"middle_index", clip.middle_index},
          {"annotations", std::move(ann)}};
}

scene::VideoClip clip_from_json(const json& j) {
  try {
    scene::VideoClip clip;
    clip.clip_id = j.at("clip_id").get<std::string>();
    clip.middle_index = j.at("middle_index").get<int>();
    for (const auto& jf : j.at("frames")) {
      scene::Frame f;
      f.t = jf.at("t").get<int>();
      for (const auto& jd : jf.at("detections")) {
        scene::Detection d;
        d.id = jd.at("id").get<int>();
        d.box = box_from_json(jd.at("box"));
        d.class_id = jd.at("class_id").get<int>();
        d.confidence = jd.at("confidence").get<double>();
        d.feature = jd.at("feature").get<std::vector<double>>();
        f.detections.push_back(std::move(d));
      }
      if (jf.contains("oracle_gt")) {
        std::vector<scene::GroundTruthTriplet> gt;
        for (const auto& jg : jf.at("oracle_gt")) {
          gt.push_back({entity_from_json(jg.at("subject")), jg.at("predicate").get<int>(),
                        entity_from_json(jg.at("object"))});
        }
        f.oracle_gt = std::move(gt);
      }
      clip.frames.push_back(std::move(f));
    }
    for (const auto& ja : j.at("annotations")) {
      if (!ja.is_array() || ja.size() != 3) throw DataError("annotation must be [s,p,o]");
      clip.annotations.push_back({ja[0].get<int>(), ja[1].get<int>(), ja[2].get<int>()});
    }
    return clip;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed clip document: ") + e.what());
  }
}

json attention_to_json(const scene::AttentionMap& map) {
  return {{"h", map.height()}, {"w", map.width()}, {"values", map.values()}};
}

scene::AttentionMap attention_from_json(const json& j) {
  try {
    scene::AttentionMap map(j.at("h").get<int>(), j.at("w").get<int>(),
                            j.at("values").get<std::vector<double>>());
    map.validate();
    return map;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed attention sidecar: ") + e.what());
  }
}

std::string clip_filename(const std::string& clip_id) { return clip_id + ".json"; }

std::string attention_filename(const scene::AttentionKey& key) {
  return key.clip_id + ".t" + std::to_string(key.t) + ".a" + std::to_string(key.annotation) + "." +
         scene::to_string(key.side) + ".attn.json";
}

void write_json_file(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump() << '\n';
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_dataset(const std::filesystem::path& dir, const Dataset& data) {
  std::filesystem::create_directories(dir);
  for (const auto& clip : data.clips) write_json_file(dir / clip_filename(clip.clip_id), clip_to_json(clip));
  for (const auto& [key, map] : data.attention)
    write_json_file(dir / attention_filename(key), attention_to_json(map));
}

Dataset load_dataset(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw DataError("not a dataset directory: " + dir.string());
  static const std::regex sidecar(R"((.+)\.t(\d+)\.a(\d+)\.(subject|object)\.attn\.json)");
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
  std::sort(files.begin(), files.end());

  Dataset data;
  for (const auto& p : files) {
    const std::string name = p.filename().string();
    std::smatch m;
    if (std::regex_match(name, m, sidecar)) {
      scene::AttentionKey key{m[1].str(), std::stoi(m[2].str()), std::stoi(m[3].str()),
                              scene::entity_side_from_string(m[4].str())};
      data.attention[key] = attention_from_json(read_json_file(p));
    } else if (name.find(".attn.") == std::string::npos && name != "run.json") {
      data.clips.push_back(clip_from_json(read_json_file(p)));
    }
  }
  std::sort(data.clips.begin(), data.clips.end(),
            [](const auto& a, const auto& b) { return a.clip_id < b.clip_id; });
  return data;
}

Dataset generate_dataset(const scene::GenConfig& cfg) {
  Dataset data;
  data.clips = scene::generate_corpus(cfg);
  const std::uint64_t attention_seed = cfg.seed ^ 0xa77e'5eed'0000'0001ULL;
  for (std::size_t i = 0; i < data.clips.size(); ++i)
    data.attention.merge(scene::synthesize_clip_attention(data.clips[i], cfg, scene::clip_seed_for(attention_seed, i)));
  return data;
}

}  // namespace pavsgg::io
