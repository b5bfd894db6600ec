#include "tubekit/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <filesystem>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "tubekit/errors.hpp"
#include "tubekit/flow.hpp"
#include "tubekit/io.hpp"
#include "tubekit/mcs.hpp"
#include "tubekit/mgp.hpp"
#include "tubekit/rescoring.hpp"
#include "tubekit/tracker.hpp"

namespace tubekit {

StageSet StageSet::parse(const std::string& csv) {
  StageSet s;
  std::stringstream ss(csv);
  std::string token;
  while (std::getline(ss, token, ',')) {
    if (token.empty()) continue;
    bool* flag = nullptr;
    if (token == "mcs") flag = &s.mcs;
    else if (token == "mgp") flag = &s.mgp;
    else if (token == "track") flag = &s.track;
    else if (token == "rescore") flag = &s.rescore;
    else if (token == "combine") flag = &s.combine;
    else if (token == "eval") flag = &s.eval;
    else throw ValidationError("unknown stage '" + token + "'");
    if (*flag) throw ValidationError("stage '" + token + "' listed twice");
    *flag = true;
  }
  if (s.rescore && !s.track) throw ValidationError("stage 'rescore' requires 'track'");
  return s;
}

StageSet StageSet::all() { return {true, true, true, true, true, true}; }

std::vector<std::string> StageSet::names() const {
  std::vector<std::string> out;
  if (mcs) out.push_back("mcs");
  if (mgp) out.push_back("mgp");
  if (track) out.push_back("track");
  if (rescore) out.push_back("rescore");
  if (combine) out.push_back("combine");
  if (eval) out.push_back("eval");
  return out;
}

void parallel_for(int n, int workers, const std::function<void(int)>& fn) {
  workers = std::max(1, std::min(workers, n));
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::mutex err_mu;
  std::exception_ptr first_error;
  auto work = [&] {
    while (true) {
      const int i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mu);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) pool.emplace_back(work);
  for (std::thread& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

std::vector<NamedSource> load_sources(const std::vector<std::string>& paths,
                                      const std::string& flow_dir, int num_classes) {
  std::vector<NamedSource> sources;
  std::map<std::string, int> stem_uses;
  for (const std::string& path : paths) {
    std::vector<DetectionRecord> records = read_detection_records(path);
    std::map<std::string, ClipGeometry> geometry;
    if (!flow_dir.empty()) {
      std::set<std::string> clip_ids;
      for (const DetectionRecord& r : records) clip_ids.insert(r.clip_id);
      for (const std::string& id : clip_ids) {
        if (auto info = scan_flow_dir(flow_dir, id)) {
          geometry[id] = {info->num_frames, info->width, info->height};
        }
      }
    }
    NamedSource src;
    std::string stem = std::filesystem::path(path).stem().string();
    if (stem.empty()) stem = "source";
    const int n = stem_uses[stem]++;
    src.id = n == 0 ? stem : stem + "_" + std::to_string(n);
    src.clips = group_records(records, geometry, num_classes);
    sources.push_back(std::move(src));
  }
  return sources;
}

namespace {

namespace fs = std::filesystem;

// Milliseconds spent in `fn`, accumulated into the named timing slot.
template <typename Fn>
void timed(std::map<std::string, double>* timings, const std::string& name, Fn&& fn) {
  const auto start = std::chrono::steady_clock::now();
  try {
    fn();
  } catch (const Error& e) {
    throw Error(e.kind(), "stage " + name + ": " + e.what());
  }
  const auto stop = std::chrono::steady_clock::now();
  (*timings)[name] += std::chrono::duration<double, std::milli>(stop - start).count();
}

std::string safe_name(const std::string& id) {
  std::string out;
  for (char c : id) {
    out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_') ? c : '_';
  }
  return out.empty() ? "source" : out;
}

struct ArtifactWriter {
  std::string out_dir;
  std::map<std::string, std::string>* hashes;

  void write(const std::string& rel, const std::string& contents) const {
    if (out_dir.empty()) return;
    const std::string path = out_dir + "/" + rel;
    fs::create_directories(fs::path(path).parent_path());
    atomic_write_file(path, contents);
    (*hashes)[rel] = hash_hex(contents);
  }
};

// Classifier for tubelet labeling that degrades to a constant label when one
// side has too few samples to fit a density.
BayesClassifier1D fit_or_constant(const std::vector<double>& pos, const std::vector<double>& neg) {
  if (pos.size() >= 2 && neg.size() >= 2) return fit_classifier(pos, neg);
  BayesClassifier1D c;
  c.pos_mean = c.neg_mean = 0.5;
  c.pos_var = c.neg_var = 1.0;
  // Identical densities → posterior equals the prior everywhere, so the label
  // is constant: positive unless negatives dominate.
  c.prior_pos = pos.size() >= neg.size() ? 0.75 : 0.25;
  return c;
}

}  // namespace

PipelineResult run_pipeline(const PipelineRun& run) {
  run.config.validate();
  if (run.sources.empty()) throw ValidationError("pipeline: no detection sources");
  if (run.workers < 1) throw ValidationError("pipeline: workers must be >= 1");
  if (run.stages.track && run.flow_dir.empty()) {
    throw ValidationError("pipeline: stage 'track' needs --flow-dir");
  }
  if ((run.stages.rescore || run.stages.eval) && run.gt.empty()) {
    throw ValidationError("pipeline: stages 'rescore' and 'eval' need ground truth");
  }

  const PipelineConfig& cfg = run.config;
  PipelineResult result;
  std::map<std::string, double> timings;
  ArtifactWriter artifacts{run.out_dir, &result.output_hashes};

  // Streams to fuse, two per source when tracking runs.
  std::vector<std::vector<ClipDetections>> streams;
  std::vector<std::string> stream_ids;

  for (const NamedSource& source : run.sources) {
    const std::string name = safe_name(source.id);
    std::vector<ClipDetections> dets = source.clips;

    if (cfg.frame_stride > 1) {
      timed(&timings, "interpolate", [&] {
        parallel_for(static_cast<int>(dets.size()), run.workers, [&](int i) {
          dets[i] = interpolate_stride(dets[i], cfg.frame_stride, cfg.nms_iou);
        });
      });
    }
    const std::vector<ClipDetections> originals = dets;  // tubelet path input

    if (run.stages.mcs) {
      timed(&timings, "mcs", [&] {
        parallel_for(static_cast<int>(dets.size()), run.workers, [&](int i) {
          dets[i] = apply_mcs(dets[i], cfg.mcs_ratio, cfg.mcs_penalty);
        });
      });
      artifacts.write(name + ".mcs.jsonl", detections_to_jsonl(dets));
    }

    if (run.stages.mgp) {
      timed(&timings, "mgp", [&] {
        PropagationPlan plan;
        plan.window = cfg.mgp_window;
        plan.mode = run.flow_dir.empty() ? PropagationMode::duplicate
                                         : PropagationMode::motion_guided;
        parallel_for(static_cast<int>(dets.size()), run.workers, [&](int i) {
          DirFlowSource flows(run.flow_dir, dets[i].clip_id);
          dets[i] = propagate(dets[i], flows, plan, cfg.nms_iou);
        });
      });
      artifacts.write(name + ".mgp.jsonl", detections_to_jsonl(dets));
    }

    streams.push_back(dets);
    stream_ids.push_back(name);

    if (run.stages.track) {
      std::vector<Tubelet> tubelets;
      timed(&timings, "track", [&] {
        std::vector<std::vector<Tubelet>> per_clip(originals.size());
        parallel_for(static_cast<int>(originals.size()), run.workers, [&](int i) {
          DirFlowSource flows(run.flow_dir, originals[i].clip_id);
          per_clip[i] = build_tubelets(originals[i], flows, TrackParams::from_config(cfg));
        });
        for (auto& batch : per_clip) {
          tubelets.insert(tubelets.end(), batch.begin(), batch.end());
        }
      });
      artifacts.write(name + ".tubelets.jsonl", tubelets_to_jsonl(tubelets));

      if (run.stages.rescore) {
        timed(&timings, "rescore", [&] {
          std::map<std::string, const ClipDetections*> by_clip;
          for (const ClipDetections& c : originals) by_clip[c.clip_id] = &c;
          const ClipDetections empty;
          for (Tubelet& t : tubelets) {
            auto it = by_clip.find(t.clip_id);
            t = spatial_max_pool(t, it == by_clip.end() ? empty : *it->second, cfg.maxpool_iou);
          }
          std::vector<double> pos, neg;
          for (const Tubelet& t : tubelets) {
            const double stat = stats(t, cfg.topk_k).top_k_value;
            (label_tubelet(t, run.gt) ? pos : neg).push_back(stat);
          }
          const BayesClassifier1D clf = fit_or_constant(pos, neg);
          tubelets = rescore(tubelets, clf, cfg.topk_k, cfg.positive_range, cfg.negative_range);
          artifacts.write(name + ".classifier.json", [&] {
            nlohmann::json j{{"pos_mean", clf.pos_mean}, {"pos_var", clf.pos_var},
                             {"neg_mean", clf.neg_mean}, {"neg_var", clf.neg_var},
                             {"prior_pos", clf.prior_pos}};
            return j.dump(2) + "\n";
          }());
          artifacts.write(name + ".rescored_tubelets.jsonl", tubelets_to_jsonl(tubelets));
        });
      }

      if (!tubelets.empty()) {
        streams.push_back(tubelets_to_detections(tubelets, originals));
        stream_ids.push_back(name + ".tubelets");
      }
    }
  }

  if (run.stages.combine) {
    timed(&timings, "combine", [&] {
      std::vector<std::vector<ClipDetections>> normalized;
      normalized.reserve(streams.size());
      for (const auto& stream : streams) {
        normalized.push_back(minmax_normalize(stream, cfg.minmax_scope));
      }
      result.final_detections = combine(normalized, cfg.nms_iou);
    });
  } else {
    // No fusion: pool the streams untouched (identity when only one stream).
    timed(&timings, "pool", [&] {
      result.final_detections = streams.size() == 1
                                    ? streams[0]
                                    : combine(streams, 1.0);  // IOU 1.0 keeps everything apart
    });
  }
  artifacts.write("final_detections.jsonl", detections_to_jsonl(result.final_detections));

  if (run.stages.eval) {
    timed(&timings, "eval", [&] {
      result.report = mean_ap(result.final_detections, run.gt, cfg.eval_iou);
    });
    artifacts.write("eval_report.json", result.report->to_json() + "\n");
    artifacts.write("eval_report.txt", result.report->to_table());
  }

  if (!run.out_dir.empty()) {
    nlohmann::json manifest;
    manifest["version"] = kVersion;
    manifest["config"] = nlohmann::json::parse(config_to_json(cfg));
    manifest["stages"] = run.stages.names();
    manifest["workers"] = run.workers;
    manifest["flow_dir"] = run.flow_dir;
    nlohmann::json src = nlohmann::json::array();
    for (const NamedSource& s : run.sources) src.push_back(s.id);
    manifest["sources"] = src;
    manifest["outputs"] = result.output_hashes;
    // Timings are wall-clock and vary run to run; everything else in the
    // manifest is reproducible.
    nlohmann::json t;
    for (const auto& [stage, ms] : timings) t[stage] = ms;
    manifest["timings_ms"] = t;
    const std::string path = run.out_dir + "/manifest.json";
    fs::create_directories(run.out_dir);
    atomic_write_file(path, manifest.dump(2) + "\n");
  }
  return result;
}

}  // namespace tubekit
