#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tubekit/config.hpp"
#include "tubekit/detection.hpp"
#include "tubekit/eval.hpp"

namespace tubekit {

inline constexpr const char* kVersion = "0.1.0";

// Which stages run; execution order is fixed (mcs → mgp on the detection
// stream, track → rescore on the tubelet stream, combine, then eval).
struct StageSet {
  bool mcs = false;
  bool mgp = false;
  bool track = false;
  bool rescore = false;
  bool combine = false;
  bool eval = false;

  // Comma-separated stage names; empty string selects nothing (identity run).
  // rescore requires track.
  static StageSet parse(const std::string& csv);
  static StageSet all();
  std::vector<std::string> names() const;
  bool any() const { return mcs || mgp || track || rescore || combine || eval; }
};

struct PipelineRun {
  PipelineConfig config;
  StageSet stages = StageSet::all();
  std::vector<NamedSource> sources;       // one entry per detector
  std::vector<GroundTruthRecord> gt;      // needed by rescore and eval
  std::string flow_dir;                   // empty → duplicate-mode propagation, no tracking
  std::string out_dir;                    // empty → in-memory run, no artifacts
  int workers = 1;
};

struct PipelineResult {
  std::vector<ClipDetections> final_detections;
  std::optional<EvalReport> report;
  // Relative path → content hash for every artifact written under out_dir.
  std::map<std::string, std::string> output_hashes;
};

// Execute the enabled stages over every source, fuse the per-source streams,
// optionally evaluate, and write artifacts plus a run manifest when out_dir is
// set. Any stage failure is rethrown with the stage and source named.
PipelineResult run_pipeline(const PipelineRun& run);

// Read each detections file into a named source; clip geometry comes from the
// flow directory when one is given, otherwise it is inferred from the data.
std::vector<NamedSource> load_sources(const std::vector<std::string>& paths,
                                      const std::string& flow_dir, int num_classes);

// Run fn(0..n-1) on up to `workers` threads; the first exception wins and is
// rethrown after all workers drain.
void parallel_for(int n, int workers, const std::function<void(int)>& fn);

}  // namespace tubekit
