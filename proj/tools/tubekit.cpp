// tubekit: video detection post-processing toolkit.
//
// Exit codes: 0 success, 1 validation/usage error, 2 data error, 3 internal.

#include <cstdio>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tubekit/config.hpp"
#include "tubekit/errors.hpp"
#include "tubekit/eval.hpp"
#include "tubekit/flow.hpp"
#include "tubekit/io.hpp"
#include "tubekit/mcs.hpp"
#include "tubekit/mgp.hpp"
#include "tubekit/pipeline.hpp"
#include "tubekit/rescoring.hpp"
#include "tubekit/synth.hpp"
#include "tubekit/tracker.hpp"

namespace {

using namespace tubekit;

PipelineConfig load_config(const std::string& path) {
  if (path.empty()) {
    PipelineConfig cfg;
    cfg.validate();
    return cfg;
  }
  return read_config(path);
}

// Geometry from the flow directory when available, otherwise inferred.
std::vector<ClipDetections> load_detections(const std::string& path, const std::string& flow_dir,
                                            std::optional<int> num_classes) {
  std::vector<DetectionRecord> records = read_detection_records(path);
  std::map<std::string, ClipGeometry> geometry;
  if (!flow_dir.empty()) {
    std::map<std::string, bool> seen;
    for (const DetectionRecord& r : records) {
      if (seen[r.clip_id]) continue;
      seen[r.clip_id] = true;
      if (auto info = scan_flow_dir(flow_dir, r.clip_id)) {
        geometry[r.clip_id] = {info->num_frames, info->width, info->height};
      }
    }
  }
  return group_records(records, geometry, num_classes);
}

int run_synth(const std::string& spec_path, const std::string& out_dir) {
  write_fixtures(read_synth_spec(spec_path), out_dir);
  std::cout << "fixtures written to " << out_dir << "\n";
  return 0;
}

int run_mcs(const std::string& config_path, const std::string& in, const std::string& out) {
  const PipelineConfig cfg = load_config(config_path);
  std::vector<ClipDetections> clips = load_detections(in, "", cfg.num_classes);
  for (ClipDetections& clip : clips) {
    clip = apply_mcs(clip, cfg.mcs_ratio, cfg.mcs_penalty);
  }
  write_detections(clips, out);
  return 0;
}

int run_mgp(const std::string& config_path, const std::string& in, const std::string& flow_dir,
            const std::string& mode, const std::string& out) {
  const PipelineConfig cfg = load_config(config_path);
  PropagationPlan plan;
  plan.window = cfg.mgp_window;
  if (mode == "motion") {
    plan.mode = PropagationMode::motion_guided;
    if (flow_dir.empty()) throw ValidationError("--mode motion requires --flow-dir");
  } else if (mode == "duplicate") {
    plan.mode = PropagationMode::duplicate;
  } else {
    throw ValidationError("--mode must be 'motion' or 'duplicate'");
  }
  std::vector<ClipDetections> clips = load_detections(in, flow_dir, cfg.num_classes);
  for (ClipDetections& clip : clips) {
    DirFlowSource flows(flow_dir, clip.clip_id);
    PropagationStats stats;
    clip = propagate(clip, flows, plan, cfg.nms_iou, &stats);
    std::cerr << clip.clip_id << ": propagated=" << stats.propagated
              << " dropped=" << stats.dropped_degenerate << "\n";
  }
  write_detections(clips, out);
  return 0;
}

int run_track(const std::string& config_path, const std::string& in, const std::string& flow_dir,
              const std::string& out) {
  const PipelineConfig cfg = load_config(config_path);
  std::vector<ClipDetections> clips = load_detections(in, flow_dir, cfg.num_classes);
  std::vector<Tubelet> tubelets;
  for (const ClipDetections& clip : clips) {
    DirFlowSource flows(flow_dir, clip.clip_id);
    std::vector<Tubelet> built = build_tubelets(clip, flows, TrackParams::from_config(cfg));
    tubelets.insert(tubelets.end(), built.begin(), built.end());
  }
  write_tubelets(tubelets, out);
  return 0;
}

int run_rescore(const std::string& config_path, const std::string& tubelets_path,
                const std::string& dets_path, const std::string& fit_gt,
                const std::string& model_out, const std::string& model_in,
                const std::string& out) {
  const PipelineConfig cfg = load_config(config_path);
  std::vector<Tubelet> tubelets = read_tubelets(tubelets_path);
  std::vector<ClipDetections> dets = load_detections(dets_path, "", cfg.num_classes);

  std::map<std::string, const ClipDetections*> by_clip;
  for (const ClipDetections& c : dets) by_clip[c.clip_id] = &c;
  const ClipDetections empty;
  for (Tubelet& t : tubelets) {
    auto it = by_clip.find(t.clip_id);
    t = spatial_max_pool(t, it == by_clip.end() ? empty : *it->second, cfg.maxpool_iou);
  }

  BayesClassifier1D clf;
  if (!model_in.empty()) {
    clf = read_classifier(model_in);
  } else {
    const std::vector<GroundTruthRecord> gt = read_ground_truth(fit_gt);
    std::vector<double> pos, neg;
    for (const Tubelet& t : tubelets) {
      const double stat = stats(t, cfg.topk_k).top_k_value;
      (label_tubelet(t, gt) ? pos : neg).push_back(stat);
    }
    clf = fit_classifier(pos, neg);
    if (!model_out.empty()) write_classifier(clf, model_out);
  }
  write_tubelets(rescore(tubelets, clf, cfg.topk_k, cfg.positive_range, cfg.negative_range), out);
  return 0;
}

int run_combine(const std::string& config_path, const std::vector<std::string>& ins,
                const std::string& gt_path, bool greedy, const std::string& out) {
  const PipelineConfig cfg = load_config(config_path);
  if (greedy && gt_path.empty()) throw ValidationError("--greedy requires --gt");

  std::vector<NamedSource> sources = load_sources(ins, "", cfg.num_classes);
  if (greedy) {
    const std::vector<GroundTruthRecord> gt = read_ground_truth(gt_path);
    GreedyAverageResult result = greedy_average(
        sources, cfg.nms_iou, cfg.fusion_epsilon,
        [&](const std::vector<ClipDetections>& clips) {
          return mean_ap(clips, gt, cfg.eval_iou).mean_ap;
        });
    for (size_t i = 0; i < result.selected.size(); ++i) {
      std::cout << "selected " << result.selected[i] << " (mean AP "
                << result.ap_trace[i] << ")\n";
    }
    write_detections(result.averaged, out);
    return 0;
  }
  std::vector<std::vector<ClipDetections>> normalized;
  normalized.reserve(sources.size());
  for (const NamedSource& s : sources) {
    normalized.push_back(minmax_normalize(s.clips, cfg.minmax_scope));
  }
  write_detections(combine(normalized, cfg.nms_iou), out);
  return 0;
}

int run_eval_map(const std::string& dets_path, const std::string& gt_path, double iou_thresh,
                 const std::string& json_out) {
  const std::vector<ClipDetections> dets = load_detections(dets_path, "", std::nullopt);
  const std::vector<GroundTruthRecord> gt = read_ground_truth(gt_path);
  const EvalReport report = mean_ap(dets, gt, iou_thresh);
  std::cout << report.to_json() << "\n" << report.to_table();
  if (!json_out.empty()) atomic_write_file(json_out, report.to_json() + "\n");
  return 0;
}

int run_eval_corloc(const std::string& dets_path, const std::string& gt_path,
                    const std::string& targets_path) {
  const std::vector<ClipDetections> dets = load_detections(dets_path, "", std::nullopt);
  const std::vector<GroundTruthRecord> gt = read_ground_truth(gt_path);
  std::map<std::string, int> targets;
  if (targets_path.empty()) {
    targets = derive_targets(gt);
  } else {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(read_text_file(targets_path));
      if (!j.is_object()) throw ParseError(targets_path, 0, "", "expected an object");
      for (auto& [clip, cls] : j.items()) targets[clip] = cls.get<int>();
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(targets_path, 0, "", e.what());
    }
  }
  const CorLocReport report = corloc(dets, gt, targets);
  nlohmann::json j{{"frames", report.frames},
                   {"localized", report.localized},
                   {"ratio", report.ratio}};
  std::cout << j.dump(2) << "\n";
  char line[96];
  std::snprintf(line, sizeof(line), "corloc %ld/%ld = %.4f\n", report.localized, report.frames,
                report.ratio);
  std::cout << line;
  return 0;
}

int run_pipeline_cmd(const std::string& config_path, const std::vector<std::string>& dets_paths,
                     const std::string& flow_dir, const std::string& gt_path,
                     const std::string& out_dir, const std::string& stages, int workers) {
  PipelineRun run;
  run.config = load_config(config_path);
  run.stages = StageSet::parse(stages);
  run.sources = load_sources(dets_paths, flow_dir, run.config.num_classes);
  if (!gt_path.empty()) run.gt = read_ground_truth(gt_path);
  run.flow_dir = flow_dir;
  run.out_dir = out_dir;
  run.workers = workers;
  PipelineResult result = run_pipeline(run);
  if (result.report) std::cout << result.report->to_table();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"video detection post-processing toolkit"};
  app.require_subcommand(1);

  std::string config_path, in_path, out_path, flow_dir, spec_path, out_dir;
  std::string tubelets_path, dets_path, gt_path, fit_gt, model_in, model_out, targets_path;
  std::string mode = "motion";
  std::string stages = "mcs,mgp,track,rescore,combine,eval";
  std::string json_out;
  std::vector<std::string> multi_in;
  double iou_thresh = 0.5;
  int workers = 1;
  bool greedy = false;

  CLI::App* synth = app.add_subcommand("synth", "generate synthetic fixtures");
  synth->add_option("--spec", spec_path, "generator spec JSON")->required();
  synth->add_option("--out-dir", out_dir, "output directory")->required();

  CLI::App* mcs = app.add_subcommand("mcs", "multi-context suppression");
  mcs->add_option("--config", config_path, "pipeline config JSON");
  mcs->add_option("--in", in_path, "detections JSONL")->required();
  mcs->add_option("--out", out_path, "output JSONL")->required();

  CLI::App* mgp = app.add_subcommand("mgp", "motion-guided propagation");
  mgp->add_option("--config", config_path, "pipeline config JSON");
  mgp->add_option("--in", in_path, "detections JSONL")->required();
  mgp->add_option("--flow-dir", flow_dir, "flow directory");
  mgp->add_option("--mode", mode, "motion|duplicate (default motion)");
  mgp->add_option("--out", out_path, "output JSONL")->required();

  CLI::App* track = app.add_subcommand("track", "build tubelets from anchors");
  track->add_option("--config", config_path, "pipeline config JSON");
  track->add_option("--in", in_path, "detections JSONL")->required();
  track->add_option("--flow-dir", flow_dir, "flow directory")->required();
  track->add_option("--out", out_path, "tubelets JSONL")->required();

  CLI::App* rescore = app.add_subcommand("rescore", "max-pool, classify and remap tubelets");
  rescore->add_option("--config", config_path, "pipeline config JSON");
  rescore->add_option("--tubelets", tubelets_path, "tubelets JSONL")->required();
  rescore->add_option("--dets", dets_path, "still-image detections JSONL")->required();
  CLI::Option* fit_opt = rescore->add_option("--fit", fit_gt, "fit classifier on this ground truth");
  CLI::Option* model_opt = rescore->add_option("--model", model_in, "use a fitted classifier");
  rescore->add_option("--model-out", model_out, "write the fitted classifier here");
  rescore->add_option("--out", out_path, "rescored tubelets JSONL")->required();
  fit_opt->excludes(model_opt);
  model_opt->excludes(fit_opt);

  CLI::App* combine = app.add_subcommand("combine", "fuse detection sets");
  combine->add_option("--config", config_path, "pipeline config JSON");
  combine->add_option("--in", multi_in, "detections JSONL (repeatable)")->required();
  combine->add_option("--gt", gt_path, "ground truth JSONL (for --greedy)");
  combine->add_flag("--greedy", greedy, "greedy score averaging driven by mean AP");
  combine->add_option("--out", out_path, "output JSONL")->required();

  CLI::App* eval_map = app.add_subcommand("eval-map", "mean average precision");
  eval_map->add_option("--dets", dets_path, "detections JSONL")->required();
  eval_map->add_option("--gt", gt_path, "ground truth JSONL")->required();
  eval_map->add_option("--iou", iou_thresh, "matching IOU (default 0.5)");
  eval_map->add_option("--json-out", json_out, "also write the JSON report here");

  CLI::App* eval_corloc = app.add_subcommand("eval-corloc", "localization accuracy");
  eval_corloc->add_option("--dets", dets_path, "detections JSONL")->required();
  eval_corloc->add_option("--gt", gt_path, "ground truth JSONL")->required();
  eval_corloc->add_option("--targets", targets_path, "clip → target class JSON");

  CLI::App* pipeline = app.add_subcommand("pipeline", "run the full post-processing pipeline");
  pipeline->add_option("--config", config_path, "pipeline config JSON");
  pipeline->add_option("--dets", multi_in, "detections JSONL (repeatable)")->required();
  pipeline->add_option("--flow-dir", flow_dir, "flow directory");
  pipeline->add_option("--gt", gt_path, "ground truth JSONL");
  pipeline->add_option("--out-dir", out_dir, "artifact directory");
  pipeline->add_option("--stages", stages, "comma-separated stage subset");
  pipeline->add_option("--workers", workers, "worker threads (default 1)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (synth->parsed()) return run_synth(spec_path, out_dir);
    if (mcs->parsed()) return run_mcs(config_path, in_path, out_path);
    if (mgp->parsed()) return run_mgp(config_path, in_path, flow_dir, mode, out_path);
    if (track->parsed()) return run_track(config_path, in_path, flow_dir, out_path);
    if (rescore->parsed()) {
      if (fit_gt.empty() && model_in.empty()) {
        throw ValidationError("rescore needs --fit or --model");
      }
      return run_rescore(config_path, tubelets_path, dets_path, fit_gt, model_out, model_in,
                         out_path);
    }
    if (combine->parsed()) return run_combine(config_path, multi_in, gt_path, greedy, out_path);
    if (eval_map->parsed()) return run_eval_map(dets_path, gt_path, iou_thresh, json_out);
    if (eval_corloc->parsed()) return run_eval_corloc(dets_path, gt_path, targets_path);
    if (pipeline->parsed()) {
      return run_pipeline_cmd(config_path, multi_in, flow_dir, gt_path, out_dir, stages, workers);
    }
  } catch (const tubekit::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
