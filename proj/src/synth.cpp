#include "tubekit/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <set>

#include <json.hpp>

#include "tubekit/errors.hpp"
#include "tubekit/eval.hpp"
#include "tubekit/io.hpp"
#include "tubekit/mcs.hpp"
#include "tubekit/rng.hpp"

namespace tubekit {

namespace {

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

double sample_score(Rng& rng, const ScoreModel& m) {
  // The normal draw happens unconditionally so the stream position never
  // depends on parameter values.
  return clamp01(m.mean + m.stddev * rng.normal());
}

std::string clip_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "clip_%03d", index);
  return buf;
}

struct ObjectState {
  int class_id = 0;
  double half_w = 0.0, half_h = 0.0;
  double cx = 0.0, cy = 0.0;
  double vx = 0.0, vy = 0.0;
};

BBox object_box(const ObjectState& o) {
  return {o.cx - o.half_w, o.cy - o.half_h, o.cx + o.half_w, o.cy + o.half_h};
}

// Reflect `c + d` off the walls [lo, hi]; flips *vel on a bounce.
double bounce(double c, double d, double lo, double hi, double* vel) {
  double n = c + d;
  if (n < lo) {
    n = 2.0 * lo - n;
    *vel = -*vel;
  } else if (n > hi) {
    n = 2.0 * hi - n;
    *vel = -*vel;
  }
  return std::min(hi, std::max(lo, n));
}

// Paint `value` over every pixel whose center lies in `box` (same inclusion
// rule as the flow-sampling mean).
void paint(FlowField* field, const BBox& box, float du, float dv) {
  const int x0 = std::max(0, static_cast<int>(std::ceil(box.x0 - 0.5)));
  const int x1 = std::min(field->width, static_cast<int>(std::ceil(box.x1 - 0.5)));
  const int y0 = std::max(0, static_cast<int>(std::ceil(box.y0 - 0.5)));
  const int y1 = std::min(field->height, static_cast<int>(std::ceil(box.y1 - 0.5)));
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) field->set(x, y, du, dv);
  }
}

}  // namespace

void SynthSpec::validate() const {
  auto require = [](bool ok, const char* msg) {
    if (!ok) throw ValidationError(std::string("synth: ") + msg);
  };
  require(num_clips >= 1, "num_clips must be >= 1");
  require(frames_per_clip >= 1, "frames_per_clip must be >= 1");
  require(width >= 1 && height >= 1, "frame size must be positive");
  require(num_classes >= 1, "num_classes must be >= 1");
  require(objects_per_clip >= 0, "objects_per_clip must be >= 0");
  require(min_size > 0 && min_size <= max_size, "size range must satisfy 0 < min <= max");
  require(max_size <= std::min(width, height), "max_size must fit inside the frame");
  require(min_speed >= 0 && min_speed <= max_speed, "speed range must satisfy 0 <= min <= max");
  require(motion_jitter >= 0, "motion_jitter must be >= 0");
  require(miss_prob >= 0 && miss_prob <= 1, "miss_prob must be in [0,1]");
  require(true_score.stddev >= 0 && false_score.stddev >= 0 && burst.score.stddev >= 0,
          "score stddev must be >= 0");
  require(box_jitter >= 0, "box_jitter must be >= 0");
  require(fp_per_frame >= 0, "fp_per_frame must be >= 0");
  require(burst.count_per_clip >= 0, "burst count must be >= 0");
  require(burst.length >= 1, "burst length must be >= 1");
}

SynthClip generate_clip(const SynthSpec& spec, int clip_index) {
  spec.validate();
  Rng rng = Rng::substream(spec.seed, static_cast<uint64_t>(clip_index));
  const double W = spec.width, H = spec.height;
  const int T = spec.frames_per_clip;

  // 1. Object initialisation (one draw block per object).
  std::vector<ObjectState> objects(spec.objects_per_clip);
  std::set<int> object_classes;
  for (ObjectState& o : objects) {
    o.class_id = static_cast<int>(rng.below(spec.num_classes));
    object_classes.insert(o.class_id);
    o.half_w = 0.5 * rng.uniform(spec.min_size, spec.max_size);
    o.half_h = 0.5 * rng.uniform(spec.min_size, spec.max_size);
    o.cx = rng.uniform(o.half_w, W - o.half_w);
    o.cy = rng.uniform(o.half_h, H - o.half_h);
    const double speed = rng.uniform(spec.min_speed, spec.max_speed);
    constexpr double kTwoPi = 6.283185307179586476925286766559;
    const double angle = rng.uniform(0.0, kTwoPi);
    o.vx = speed * std::cos(angle);
    o.vy = speed * std::sin(angle);
  }

  // 2. Trajectories, object-major; jitter normals drawn even when sigma is 0.
  std::vector<std::vector<BBox>> tracks(objects.size());
  for (size_t i = 0; i < objects.size(); ++i) {
    ObjectState o = objects[i];
    tracks[i].reserve(T);
    tracks[i].push_back(object_box(o));
    for (int t = 0; t + 1 < T; ++t) {
      const double dx = o.vx + spec.motion_jitter * rng.normal();
      const double dy = o.vy + spec.motion_jitter * rng.normal();
      o.cx = bounce(o.cx, dx, o.half_w, W - o.half_w, &o.vx);
      o.cy = bounce(o.cy, dy, o.half_h, H - o.half_h, &o.vy);
      tracks[i].push_back(object_box(o));
    }
  }

  SynthClip out;
  out.detections.clip_id = clip_name(clip_index);
  out.detections.num_frames = T;
  out.detections.width = spec.width;
  out.detections.height = spec.height;

  for (size_t i = 0; i < objects.size(); ++i) {
    for (int t = 0; t < T; ++t) {
      out.ground_truth.push_back({out.detections.clip_id, t, objects[i].class_id,
                                  static_cast<int>(i), tracks[i][t]});
    }
  }
  std::stable_sort(out.ground_truth.begin(), out.ground_truth.end(),
                   [](const GroundTruthRecord& a, const GroundTruthRecord& b) {
                     if (a.frame != b.frame) return a.frame < b.frame;
                     return a.track_id < b.track_id;
                   });

  // Exact flow: background carries the pan, object pixels the realised
  // per-step displacement (painted in object order, later objects on top).
  for (int t = 0; t + 1 < T; ++t) {
    FlowField fwd(spec.width, spec.height, static_cast<float>(spec.pan_x),
                  static_cast<float>(spec.pan_y));
    for (size_t i = 0; i < objects.size(); ++i) {
      const double dx = 0.5 * (tracks[i][t + 1].x0 + tracks[i][t + 1].x1) -
                        0.5 * (tracks[i][t].x0 + tracks[i][t].x1);
      const double dy = 0.5 * (tracks[i][t + 1].y0 + tracks[i][t + 1].y1) -
                        0.5 * (tracks[i][t].y0 + tracks[i][t].y1);
      paint(&fwd, tracks[i][t], static_cast<float>(dx), static_cast<float>(dy));
    }
    out.forward_flows.push_back(std::move(fwd));
  }
  for (int t = 1; t < T; ++t) {
    FlowField bwd(spec.width, spec.height, static_cast<float>(-spec.pan_x),
                  static_cast<float>(-spec.pan_y));
    for (size_t i = 0; i < objects.size(); ++i) {
      const double dx = 0.5 * (tracks[i][t - 1].x0 + tracks[i][t - 1].x1) -
                        0.5 * (tracks[i][t].x0 + tracks[i][t].x1);
      const double dy = 0.5 * (tracks[i][t - 1].y0 + tracks[i][t - 1].y1) -
                        0.5 * (tracks[i][t].y0 + tracks[i][t].y1);
      paint(&bwd, tracks[i][t], static_cast<float>(dx), static_cast<float>(dy));
    }
    out.backward_flows.push_back(std::move(bwd));
  }

  // 3. Detector simulation, frame-major. Every object-frame consumes the same
  // draws (miss, score, two jitter normals) regardless of outcome.
  for (int t = 0; t < T; ++t) {
    for (size_t i = 0; i < objects.size(); ++i) {
      const bool missed = rng.uniform() < spec.miss_prob;
      const double score = sample_score(rng, spec.true_score);
      const double jx = spec.box_jitter * rng.normal();
      const double jy = spec.box_jitter * rng.normal();
      if (missed) continue;
      Detection d;
      d.frame = t;
      d.class_id = objects[i].class_id;
      d.score = score;
      d.box = tracks[i][t].shifted(jx, jy);
      auto clamped = clamp_box(d.box, W, H);
      if (!clamped) continue;
      d.box = *clamped;
      out.detections.detections.push_back(std::move(d));
    }
    // Scattered false positives: fixed count plus one Bernoulli remainder.
    const double frac = spec.fp_per_frame - std::floor(spec.fp_per_frame);
    int fp_count = static_cast<int>(std::floor(spec.fp_per_frame));
    if (rng.uniform() < frac) ++fp_count;
    for (int f = 0; f < fp_count; ++f) {
      Detection d;
      d.frame = t;
      d.class_id = static_cast<int>(rng.below(spec.num_classes));
      const double hw = 0.5 * rng.uniform(spec.min_size, spec.max_size);
      const double hh = 0.5 * rng.uniform(spec.min_size, spec.max_size);
      const double cx = rng.uniform(hw, W - hw);
      const double cy = rng.uniform(hh, H - hh);
      d.box = {cx - hw, cy - hh, cx + hw, cy + hh};
      d.score = sample_score(rng, spec.false_score);
      out.detections.detections.push_back(std::move(d));
    }
  }

  // 4. Bursts: stationary high-score runs in a class the clip's objects do not
  // use (all classes as fallback).
  std::vector<int> foreign;
  for (int c = 0; c < spec.num_classes; ++c) {
    if (!object_classes.count(c)) foreign.push_back(c);
  }
  for (int r = 0; r < spec.burst.count_per_clip; ++r) {
    const int length = std::min(spec.burst.length, T);
    const int max_start = T - length;
    const int start = max_start > 0 ? static_cast<int>(rng.below(max_start + 1)) : 0;
    const int cls = foreign.empty()
                        ? static_cast<int>(rng.below(spec.num_classes))
                        : foreign[rng.below(foreign.size())];
    const double hw = 0.5 * rng.uniform(spec.min_size, spec.max_size);
    const double hh = 0.5 * rng.uniform(spec.min_size, spec.max_size);
    const double cx = rng.uniform(hw, W - hw);
    const double cy = rng.uniform(hh, H - hh);
    for (int k = 0; k < length; ++k) {
      Detection d;
      d.frame = start + k;
      d.class_id = cls;
      d.box = {cx - hw, cy - hh, cx + hw, cy + hh};
      d.score = sample_score(rng, spec.burst.score);
      out.detections.detections.push_back(std::move(d));
    }
  }

  out.detections.sort_canonical();
  return out;
}

SynthOutput generate(const SynthSpec& spec) {
  spec.validate();
  SynthOutput out;
  for (int i = 0; i < spec.num_clips; ++i) {
    SynthClip clip = generate_clip(spec, i);
    out.clips.push_back(clip.detections);
    out.ground_truth.insert(out.ground_truth.end(), clip.ground_truth.begin(),
                            clip.ground_truth.end());
    out.full.push_back(std::move(clip));
  }
  return out;
}

namespace {

nlohmann::json score_model_json(const ScoreModel& m) {
  return {{"mean", m.mean}, {"stddev", m.stddev}};
}

nlohmann::json spec_json(const SynthSpec& s) {
  return {{"num_clips", s.num_clips},
          {"frames_per_clip", s.frames_per_clip},
          {"width", s.width},
          {"height", s.height},
          {"num_classes", s.num_classes},
          {"objects_per_clip", s.objects_per_clip},
          {"min_size", s.min_size},
          {"max_size", s.max_size},
          {"min_speed", s.min_speed},
          {"max_speed", s.max_speed},
          {"motion_jitter", s.motion_jitter},
          {"pan_x", s.pan_x},
          {"pan_y", s.pan_y},
          {"miss_prob", s.miss_prob},
          {"true_score", score_model_json(s.true_score)},
          {"false_score", score_model_json(s.false_score)},
          {"box_jitter", s.box_jitter},
          {"fp_per_frame", s.fp_per_frame},
          {"burst",
           {{"count_per_clip", s.burst.count_per_clip},
            {"length", s.burst.length},
            {"score", score_model_json(s.burst.score)}}},
          {"seed", s.seed}};
}

ScoreModel parse_score_model(const nlohmann::json& j, const std::string& origin,
                             const std::string& field) {
  if (!j.is_object()) throw ParseError(origin, 0, field, "expected an object");
  ScoreModel m;
  for (auto& [key, value] : j.items()) {
    if (key == "mean") {
      m.mean = value.get<double>();
    } else if (key == "stddev") {
      m.stddev = value.get<double>();
    } else {
      throw ParseError(origin, 0, field + "." + key, "unknown key");
    }
  }
  return m;
}

}  // namespace

SynthSpec parse_synth_spec(const std::string& json_text, const std::string& origin) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(origin, 0, "", e.what());
  }
  if (!j.is_object()) throw ParseError(origin, 0, "", "spec must be a JSON object");

  SynthSpec s;
  try {
    for (auto& [key, value] : j.items()) {
      if (key == "num_clips") s.num_clips = value.get<int>();
      else if (key == "frames_per_clip") s.frames_per_clip = value.get<int>();
      else if (key == "width") s.width = value.get<int>();
      else if (key == "height") s.height = value.get<int>();
      else if (key == "num_classes") s.num_classes = value.get<int>();
      else if (key == "objects_per_clip") s.objects_per_clip = value.get<int>();
      else if (key == "min_size") s.min_size = value.get<double>();
      else if (key == "max_size") s.max_size = value.get<double>();
      else if (key == "min_speed") s.min_speed = value.get<double>();
      else if (key == "max_speed") s.max_speed = value.get<double>();
      else if (key == "motion_jitter") s.motion_jitter = value.get<double>();
      else if (key == "pan_x") s.pan_x = value.get<double>();
      else if (key == "pan_y") s.pan_y = value.get<double>();
      else if (key == "miss_prob") s.miss_prob = value.get<double>();
      else if (key == "true_score") s.true_score = parse_score_model(value, origin, key);
      else if (key == "false_score") s.false_score = parse_score_model(value, origin, key);
      else if (key == "box_jitter") s.box_jitter = value.get<double>();
      else if (key == "fp_per_frame") s.fp_per_frame = value.get<double>();
      else if (key == "seed") s.seed = value.get<uint64_t>();
      else if (key == "burst") {
        if (!value.is_object()) throw ParseError(origin, 0, "burst", "expected an object");
        for (auto& [bkey, bvalue] : value.items()) {
          if (bkey == "count_per_clip") s.burst.count_per_clip = bvalue.get<int>();
          else if (bkey == "length") s.burst.length = bvalue.get<int>();
          else if (bkey == "score") s.burst.score = parse_score_model(bvalue, origin, "burst.score");
          else throw ParseError(origin, 0, "burst." + bkey, "unknown key");
        }
      } else {
        throw ParseError(origin, 0, key, "unknown key");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(origin, 0, "", e.what());
  }
  s.validate();
  return s;
}

SynthSpec read_synth_spec(const std::string& path) {
  return parse_synth_spec(read_text_file(path), path);
}

void write_fixtures(const SynthSpec& spec, const std::string& out_dir) {
  namespace fs = std::filesystem;
  SynthOutput out = generate(spec);

  fs::create_directories(out_dir);
  std::map<std::string, std::string> files;  // relative path → content hash

  write_detections(out.clips, out_dir + "/detections.jsonl");
  files["detections.jsonl"] = hash_file(out_dir + "/detections.jsonl");
  write_ground_truth(out.ground_truth, out_dir + "/ground_truth.jsonl");
  files["ground_truth.jsonl"] = hash_file(out_dir + "/ground_truth.jsonl");

  for (const SynthClip& clip : out.full) {
    const std::string clip_dir = out_dir + "/flows/" + clip.detections.clip_id;
    fs::create_directories(clip_dir);
    for (size_t t = 0; t < clip.forward_flows.size(); ++t) {
      const std::string rel =
          "flows/" + clip.detections.clip_id + "/" + std::to_string(t) + ".flo";
      write_flow(clip.forward_flows[t], out_dir + "/" + rel);
      files[rel] = hash_file(out_dir + "/" + rel);
    }
    for (size_t t = 0; t < clip.backward_flows.size(); ++t) {
      const std::string rel =
          "flows/" + clip.detections.clip_id + "/" + std::to_string(t + 1) + ".bflo";
      write_flow(clip.backward_flows[t], out_dir + "/" + rel);
      files[rel] = hash_file(out_dir + "/" + rel);
    }
  }

  nlohmann::json manifest;
  manifest["generator"] = {{"sequence", "splitmix64"}, {"normals", "box-muller"}};
  manifest["spec"] = spec_json(spec);
  manifest["files"] = files;
  atomic_write_file(out_dir + "/manifest.json", manifest.dump(2) + "\n");
}

GridSearchResult grid_search_mcs(const std::vector<ClipDetections>& clips,
                                 const std::vector<GroundTruthRecord>& gt,
                                 const std::vector<double>& ratios,
                                 const std::vector<double>& penalties, double matching_iou) {
  if (ratios.empty() || penalties.empty()) {
    throw ValidationError("grid_search_mcs: grids must be nonempty");
  }
  std::vector<double> rs = ratios, ps = penalties;
  std::sort(rs.begin(), rs.end());
  std::sort(ps.begin(), ps.end());

  GridSearchResult best;
  bool first = true;
  for (double ratio : rs) {
    for (double penalty : ps) {
      std::vector<ClipDetections> transformed;
      transformed.reserve(clips.size());
      for (const ClipDetections& clip : clips) {
        transformed.push_back(apply_mcs(clip, ratio, penalty));
      }
      const double score = mean_ap(transformed, gt, matching_iou).mean_ap;
      if (first || score > best.mean_ap) {
        best = {ratio, penalty, score};
        first = false;
      }
    }
  }
  return best;
}

}  // namespace tubekit
