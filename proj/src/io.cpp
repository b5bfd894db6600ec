#include "tubekit/io.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <tuple>

#include <json.hpp>

#include "tubekit/errors.hpp"

namespace tubekit {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json parse_line(const std::string& line, const std::string& origin, long lineno) {
  try {
    return json::parse(line);
  } catch (const json::exception& e) {
    throw ParseError(origin, lineno, "<line>", e.what());
  }
}

// Field accessors that convert json type errors into located parse errors.
template <typename T>
T need(const json& j, const char* key, const std::string& origin, long lineno) {
  if (!j.contains(key)) throw ParseError(origin, lineno, key, "missing");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ParseError(origin, lineno, key, e.what());
  }
}

BBox need_bbox(const json& j, const std::string& origin, long lineno) {
  const json& b = j.contains("bbox") ? j.at("bbox") : json();
  if (!b.is_array() || b.size() != 4) {
    throw ParseError(origin, lineno, "bbox", "must be an array of 4 numbers");
  }
  BBox box;
  double* coords[4] = {&box.x0, &box.y0, &box.x1, &box.y1};
  for (size_t i = 0; i < 4; ++i) {
    if (!b[i].is_number()) throw ParseError(origin, lineno, "bbox", "must be an array of 4 numbers");
    *coords[i] = b[i].get<double>();
  }
  if (!box.valid()) {
    throw ParseError(origin, lineno, "bbox",
                     "invalid box (needs finite coordinates with x1 > x0, y1 > y0)");
  }
  return box;
}

void reject_unknown_keys(const json& j, std::initializer_list<const char*> allowed,
                         const std::string& origin, long lineno) {
  for (const auto& [key, value] : j.items()) {
    if (std::find_if(allowed.begin(), allowed.end(),
                     [&](const char* a) { return key == a; }) == allowed.end()) {
      throw ParseError(origin, lineno, key, "unknown key");
    }
  }
}

json bbox_to_json(const BBox& b) { return json::array({b.x0, b.y0, b.x1, b.y1}); }

void for_each_line(const std::string& text, const std::function<void(const std::string&, long)>& fn) {
  std::istringstream in(text);
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    fn(line, lineno);
  }
}

}  // namespace

std::vector<DetectionRecord> parse_detection_records(const std::string& text,
                                                     const std::string& origin) {
  std::vector<DetectionRecord> records;
  for_each_line(text, [&](const std::string& line, long lineno) {
    const json j = parse_line(line, origin, lineno);
    if (!j.is_object()) throw ParseError(origin, lineno, "<line>", "record must be a JSON object");
    reject_unknown_keys(j, {"clip", "frame", "class", "score", "bbox", "source"}, origin, lineno);
    DetectionRecord rec;
    rec.clip_id = need<std::string>(j, "clip", origin, lineno);
    if (rec.clip_id.empty()) throw ParseError(origin, lineno, "clip", "must be non-empty");
    rec.det.frame = need<int>(j, "frame", origin, lineno);
    if (rec.det.frame < 0) throw ParseError(origin, lineno, "frame", "must be >= 0");
    rec.det.class_id = need<int>(j, "class", origin, lineno);
    if (rec.det.class_id < 0) throw ParseError(origin, lineno, "class", "must be >= 0");
    rec.det.score = need<double>(j, "score", origin, lineno);
    if (!std::isfinite(rec.det.score)) throw ParseError(origin, lineno, "score", "must be finite");
    rec.det.box = need_bbox(j, origin, lineno);
    if (j.contains("source")) rec.det.source_id = need<std::string>(j, "source", origin, lineno);
    records.push_back(std::move(rec));
  });
  return records;
}

std::vector<DetectionRecord> read_detection_records(const std::string& path) {
  return parse_detection_records(read_text_file(path), path);
}

std::vector<ClipDetections> group_records(const std::vector<DetectionRecord>& records,
                                          const std::map<std::string, ClipGeometry>& geometry,
                                          std::optional<int> num_classes) {
  std::map<std::string, ClipDetections> clips;
  for (const DetectionRecord& rec : records) {
    if (num_classes && rec.det.class_id >= *num_classes) {
      throw DataError("unknown class_id " + std::to_string(rec.det.class_id) + " in clip '" +
                      rec.clip_id + "' (configured num_classes " + std::to_string(*num_classes) +
                      ")");
    }
    ClipDetections& clip = clips[rec.clip_id];
    clip.clip_id = rec.clip_id;
    clip.detections.push_back(rec.det);
  }

  std::vector<ClipDetections> out;
  out.reserve(clips.size());
  for (auto& [id, clip] : clips) {
    auto geo_it = geometry.find(id);
    if (geo_it != geometry.end()) {
      const ClipGeometry& g = geo_it->second;
      if (g.num_frames < 1 || g.width < 1 || g.height < 1) {
        throw ValidationError("geometry for clip '" + id + "' must be positive");
      }
      clip.num_frames = g.num_frames;
      clip.width = g.width;
      clip.height = g.height;
    } else {
      int max_frame = 0;
      double max_x = 1.0, max_y = 1.0;
      for (const Detection& d : clip.detections) {
        max_frame = std::max(max_frame, d.frame);
        max_x = std::max(max_x, d.box.x1);
        max_y = std::max(max_y, d.box.y1);
      }
      clip.num_frames = max_frame + 1;
      clip.width = static_cast<int>(std::ceil(max_x));
      clip.height = static_cast<int>(std::ceil(max_y));
    }

    std::vector<Detection> clamped;
    clamped.reserve(clip.detections.size());
    for (const Detection& d : clip.detections) {
      if (d.frame >= clip.num_frames) {
        throw DataError("clip '" + id + "': detection frame " + std::to_string(d.frame) +
                        " >= num_frames " + std::to_string(clip.num_frames));
      }
      auto c = clamp_to_frame(d, clip.width, clip.height);
      if (!c) {
        throw DataError("clip '" + id + "': box degenerate after clamping to " +
                        std::to_string(clip.width) + "x" + std::to_string(clip.height) +
                        " at frame " + std::to_string(d.frame));
      }
      clamped.push_back(*c);
    }
    clip.detections = std::move(clamped);
    clip.sort_canonical();
    out.push_back(std::move(clip));
  }
  return out;
}

std::vector<ClipDetections> read_detections(const std::string& path,
                                            const std::map<std::string, ClipGeometry>& geometry,
                                            std::optional<int> num_classes) {
  return group_records(read_detection_records(path), geometry, num_classes);
}

std::string detections_to_jsonl(const std::vector<ClipDetections>& clips) {
  std::vector<const ClipDetections*> ordered;
  ordered.reserve(clips.size());
  for (const auto& c : clips) ordered.push_back(&c);
  std::sort(ordered.begin(), ordered.end(),
            [](const ClipDetections* a, const ClipDetections* b) { return a->clip_id < b->clip_id; });

  std::string out;
  for (const ClipDetections* clip : ordered) {
    std::vector<Detection> dets = clip->detections;
    std::stable_sort(dets.begin(), dets.end(), canonical_less);
    for (const Detection& d : dets) {
      json j;
      j["clip"] = clip->clip_id;
      j["frame"] = d.frame;
      j["class"] = d.class_id;
      j["score"] = d.score;
      j["bbox"] = bbox_to_json(d.box);
      if (!d.source_id.empty()) j["source"] = d.source_id;
      out += j.dump();
      out += '\n';
    }
  }
  return out;
}

void write_detections(const std::vector<ClipDetections>& clips, const std::string& path) {
  atomic_write_file(path, detections_to_jsonl(clips));
}

std::vector<GroundTruthRecord> parse_ground_truth(const std::string& text,
                                                  const std::string& origin) {
  std::vector<GroundTruthRecord> records;
  // track class consistency and (clip, frame, track) uniqueness
  std::map<std::pair<std::string, int>, int> track_class;
  std::map<std::tuple<std::string, int, int>, long> seen;
  for_each_line(text, [&](const std::string& line, long lineno) {
    const json j = parse_line(line, origin, lineno);
    if (!j.is_object()) throw ParseError(origin, lineno, "<line>", "record must be a JSON object");
    reject_unknown_keys(j, {"clip", "frame", "class", "track", "bbox"}, origin, lineno);
    GroundTruthRecord rec;
    rec.clip_id = need<std::string>(j, "clip", origin, lineno);
    if (rec.clip_id.empty()) throw ParseError(origin, lineno, "clip", "must be non-empty");
    rec.frame = need<int>(j, "frame", origin, lineno);
    if (rec.frame < 0) throw ParseError(origin, lineno, "frame", "must be >= 0");
    rec.class_id = need<int>(j, "class", origin, lineno);
    if (rec.class_id < 0) throw ParseError(origin, lineno, "class", "must be >= 0");
    rec.track_id = need<int>(j, "track", origin, lineno);
    rec.box = need_bbox(j, origin, lineno);

    const auto track_key = std::make_pair(rec.clip_id, rec.track_id);
    auto [it, inserted] = track_class.emplace(track_key, rec.class_id);
    if (!inserted && it->second != rec.class_id) {
      throw ParseError(origin, lineno, "class",
                       "track " + std::to_string(rec.track_id) + " in clip '" + rec.clip_id +
                           "' changes class across frames");
    }
    const auto key = std::make_tuple(rec.clip_id, rec.frame, rec.track_id);
    auto [sit, fresh] = seen.emplace(key, lineno);
    if (!fresh) {
      throw ParseError(origin, lineno, "track",
                       "duplicate (clip, frame, track) also on line " + std::to_string(sit->second));
    }
    records.push_back(std::move(rec));
  });
  return records;
}

std::vector<GroundTruthRecord> read_ground_truth(const std::string& path) {
  return parse_ground_truth(read_text_file(path), path);
}

std::string ground_truth_to_jsonl(const std::vector<GroundTruthRecord>& records) {
  std::vector<GroundTruthRecord> ordered = records;
  std::sort(ordered.begin(), ordered.end(), [](const GroundTruthRecord& a, const GroundTruthRecord& b) {
    if (a.clip_id != b.clip_id) return a.clip_id < b.clip_id;
    if (a.frame != b.frame) return a.frame < b.frame;
    return a.track_id < b.track_id;
  });
  std::string out;
  for (const GroundTruthRecord& rec : ordered) {
    json j;
    j["clip"] = rec.clip_id;
    j["frame"] = rec.frame;
    j["class"] = rec.class_id;
    j["track"] = rec.track_id;
    j["bbox"] = bbox_to_json(rec.box);
    out += j.dump();
    out += '\n';
  }
  return out;
}

void write_ground_truth(const std::vector<GroundTruthRecord>& records, const std::string& path) {
  atomic_write_file(path, ground_truth_to_jsonl(records));
}

std::vector<Tubelet> read_tubelets(const std::string& path) {
  const std::string text = read_text_file(path);
  std::vector<Tubelet> tubelets;
  for_each_line(text, [&](const std::string& line, long lineno) {
    const json j = parse_line(line, path, lineno);
    if (!j.is_object()) throw ParseError(path, lineno, "<line>", "record must be a JSON object");
    reject_unknown_keys(j, {"clip", "class", "anchor", "nodes"}, path, lineno);
    Tubelet t;
    t.clip_id = need<std::string>(j, "clip", path, lineno);
    t.class_id = need<int>(j, "class", path, lineno);
    const int anchor = need<int>(j, "anchor", path, lineno);
    if (!j.contains("nodes") || !j.at("nodes").is_array() || j.at("nodes").empty()) {
      throw ParseError(path, lineno, "nodes", "must be a non-empty array");
    }
    for (const json& nj : j.at("nodes")) {
      if (!nj.is_object()) throw ParseError(path, lineno, "nodes", "node must be an object");
      reject_unknown_keys(nj, {"frame", "bbox", "score", "snapped"}, path, lineno);
      TubeletNode node;
      node.frame = need<int>(nj, "frame", path, lineno);
      node.box = need_bbox(nj, path, lineno);
      node.score = need<double>(nj, "score", path, lineno);
      node.snapped = need<bool>(nj, "snapped", path, lineno);
      t.nodes.push_back(node);
    }
    for (size_t i = 1; i < t.nodes.size(); ++i) {
      if (t.nodes[i].frame != t.nodes[i - 1].frame + 1) {
        throw ParseError(path, lineno, "nodes", "frames must be consecutive");
      }
    }
    if (anchor < 0 || anchor >= static_cast<int>(t.nodes.size())) {
      throw ParseError(path, lineno, "anchor", "index out of range");
    }
    t.anchor_index = static_cast<size_t>(anchor);
    tubelets.push_back(std::move(t));
  });
  return tubelets;
}

std::string tubelets_to_jsonl(const std::vector<Tubelet>& tubelets) {
  std::string out;
  for (const Tubelet& t : tubelets) {
    json nodes = json::array();
    for (const TubeletNode& n : t.nodes) {
      json nj;
      nj["frame"] = n.frame;
      nj["bbox"] = bbox_to_json(n.box);
      nj["score"] = n.score;
      nj["snapped"] = n.snapped;
      nodes.push_back(nj);
    }
    json j;
    j["clip"] = t.clip_id;
    j["class"] = t.class_id;
    j["anchor"] = static_cast<int>(t.anchor_index);
    j["nodes"] = nodes;
    out += j.dump();
    out += '\n';
  }
  return out;
}

void write_tubelets(const std::vector<Tubelet>& tubelets, const std::string& path) {
  atomic_write_file(path, tubelets_to_jsonl(tubelets));
}

BayesClassifier1D read_classifier(const std::string& path) {
  const std::string text = read_text_file(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(path, 1, "<document>", e.what());
  }
  if (!j.is_object()) throw ParseError(path, 1, "<document>", "classifier must be a JSON object");
  reject_unknown_keys(j, {"pos_mean", "pos_var", "neg_mean", "neg_var", "prior_pos"}, path, 1);
  BayesClassifier1D c;
  c.pos_mean = need<double>(j, "pos_mean", path, 1);
  c.pos_var = need<double>(j, "pos_var", path, 1);
  c.neg_mean = need<double>(j, "neg_mean", path, 1);
  c.neg_var = need<double>(j, "neg_var", path, 1);
  c.prior_pos = need<double>(j, "prior_pos", path, 1);
  if (!(c.pos_var > 0.0) || !(c.neg_var > 0.0)) {
    throw ParseError(path, 1, "pos_var", "variances must be positive");
  }
  if (!(c.prior_pos > 0.0 && c.prior_pos < 1.0)) {
    throw ParseError(path, 1, "prior_pos", "must be in (0,1)");
  }
  return c;
}

void write_classifier(const BayesClassifier1D& c, const std::string& path) {
  json j;
  j["pos_mean"] = c.pos_mean;
  j["pos_var"] = c.pos_var;
  j["neg_mean"] = c.neg_mean;
  j["neg_var"] = c.neg_var;
  j["prior_pos"] = c.prior_pos;
  atomic_write_file(path, j.dump() + "\n");
}

void atomic_write_file(const std::string& path, const std::string& contents) {
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.parent_path() / (target.filename().string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open for writing: " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw DataError("short write: " + tmp.string());
  }
  fs::rename(tmp, target);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

uint64_t fnv1a64(const std::string& bytes) {
  uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

std::string hash_hex(const std::string& bytes) {
  static const char* digits = "0123456789abcdef";
  uint64_t h = fnv1a64(bytes);
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = digits[h & 0xF];
    h >>= 4;
  }
  return out;
}

std::string hash_file(const std::string& path) { return hash_hex(read_text_file(path)); }

}  // namespace tubekit
