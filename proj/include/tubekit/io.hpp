#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tubekit/detection.hpp"
#include "tubekit/rescoring.hpp"
#include "tubekit/tracker.hpp"

namespace tubekit {

// One detection line as parsed from disk, before clip assembly.
struct DetectionRecord {
  std::string clip_id;
  Detection det;

  friend bool operator==(const DetectionRecord&, const DetectionRecord&) = default;
};

struct ClipGeometry {
  int num_frames = 0;
  int width = 0;
  int height = 0;
};

// Line-delimited JSON, one record per line:
//   {"clip": str, "frame": int, "class": int, "score": float,
//    "bbox": [x0,y0,x1,y1], "source": optional str}
// Errors carry the path, line number and offending field.
std::vector<DetectionRecord> read_detection_records(const std::string& path);
std::vector<DetectionRecord> parse_detection_records(const std::string& text,
                                                     const std::string& origin);

// Group records into clips sorted by clip id. Geometry comes from `geometry`
// when the clip id is present, otherwise it is inferred from the data
// (num_frames = max frame + 1, dimensions = max box extents rounded up).
// Boxes are clamped to the frame at ingest; a box degenerate after clamping or
// a class id outside [0, num_classes) is a data error.
std::vector<ClipDetections> group_records(const std::vector<DetectionRecord>& records,
                                          const std::map<std::string, ClipGeometry>& geometry = {},
                                          std::optional<int> num_classes = std::nullopt);

std::vector<ClipDetections> read_detections(
    const std::string& path, const std::map<std::string, ClipGeometry>& geometry = {},
    std::optional<int> num_classes = std::nullopt);

std::string detections_to_jsonl(const std::vector<ClipDetections>& clips);
void write_detections(const std::vector<ClipDetections>& clips, const std::string& path);

// Ground truth lines: {"clip", "frame", "class", "track", "bbox"}.
// (clip, frame, track) must be unique and a track keeps one class for life.
std::vector<GroundTruthRecord> read_ground_truth(const std::string& path);
std::vector<GroundTruthRecord> parse_ground_truth(const std::string& text,
                                                  const std::string& origin);
std::string ground_truth_to_jsonl(const std::vector<GroundTruthRecord>& records);
void write_ground_truth(const std::vector<GroundTruthRecord>& records, const std::string& path);

// Tubelet lines: {"clip", "class", "anchor", "nodes": [{"frame","bbox","score","snapped"}...]}.
std::vector<Tubelet> read_tubelets(const std::string& path);
std::string tubelets_to_jsonl(const std::vector<Tubelet>& tubelets);
void write_tubelets(const std::vector<Tubelet>& tubelets, const std::string& path);

// Classifier persisted as the 5-number record
// {"pos_mean","pos_var","neg_mean","neg_var","prior_pos"}.
BayesClassifier1D read_classifier(const std::string& path);
void write_classifier(const BayesClassifier1D& c, const std::string& path);

// Write-to-temp-then-rename so readers never observe partial files.
void atomic_write_file(const std::string& path, const std::string& contents);

std::string read_text_file(const std::string& path);

// FNV-1a 64-bit content hash, hex-encoded; used by run manifests.
uint64_t fnv1a64(const std::string& bytes);
std::string hash_hex(const std::string& bytes);
std::string hash_file(const std::string& path);

}  // namespace tubekit
