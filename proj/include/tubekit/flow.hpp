#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tubekit/geometry.hpp"

namespace tubekit {

// Dense per-pixel 2-D displacement for one frame transition, row-major.
struct FlowField {
  int width = 0;
  int height = 0;
  std::vector<float> u;  // width*height
  std::vector<float> v;

  FlowField() = default;
  FlowField(int w, int h, float fill_u = 0.f, float fill_v = 0.f)
      : width(w), height(h), u(static_cast<size_t>(w) * h, fill_u),
        v(static_cast<size_t>(w) * h, fill_v) {}

  size_t index(int x, int y) const { return static_cast<size_t>(y) * width + x; }
  void set(int x, int y, float du, float dv) {
    u[index(x, y)] = du;
    v[index(x, y)] = dv;
  }

  friend bool operator==(const FlowField&, const FlowField&) = default;
};

// Arithmetic mean of (u,v) over all pixel centers inside box ∩ frame.
// Errors when the intersection is empty; nullopt when it contains no pixel center.
std::optional<std::pair<double, double>> mean_flow(const FlowField& field, const BBox& box);

// Middlebury .flo layout: float magic 202021.25, int32 width, int32 height,
// then row-major interleaved (u,v) float32 per pixel. All values little-endian.
FlowField read_flow(const std::string& path);
void write_flow(const FlowField& field, const std::string& path);

// Per-clip flow lookup. forward(t) is the t -> t+1 transition, backward(t) the
// t -> t-1 transition when a backward field exists.
class FlowSource {
 public:
  virtual ~FlowSource() = default;
  virtual const FlowField* forward(int frame) const = 0;
  virtual const FlowField* backward(int frame) const = 0;
};

// Flow files under <dir>/<clip_id>/: "<frame>.flo" forward, "<frame>.bflo" backward.
class DirFlowSource : public FlowSource {
 public:
  DirFlowSource(std::string flow_dir, std::string clip_id);
  const FlowField* forward(int frame) const override;
  const FlowField* backward(int frame) const override;

 private:
  const FlowField* load(int frame, bool back) const;
  std::string dir_;
  mutable std::map<std::pair<int, bool>, std::unique_ptr<FlowField>> cache_;
};

// In-memory flows, e.g. straight out of the synthetic generator.
class MemoryFlowSource : public FlowSource {
 public:
  MemoryFlowSource() = default;
  MemoryFlowSource(std::vector<FlowField> fwd, std::vector<FlowField> bwd)
      : forward_(std::move(fwd)), backward_(std::move(bwd)) {}

  const FlowField* forward(int frame) const override {
    if (frame < 0 || frame >= static_cast<int>(forward_.size())) return nullptr;
    return &forward_[frame];
  }
  const FlowField* backward(int frame) const override {
    if (frame < 1 || frame >= static_cast<int>(backward_.size()) + 1) return nullptr;
    return &backward_[frame - 1];  // stored for frames 1..T-1
  }

 private:
  std::vector<FlowField> forward_;
  std::vector<FlowField> backward_;
};

// Clip geometry gleaned from a flow directory: frame count from the highest
// forward transition index, dimensions from the first header.
struct FlowDirInfo {
  int num_frames = 0;
  int width = 0;
  int height = 0;
};
std::optional<FlowDirInfo> scan_flow_dir(const std::string& flow_dir, const std::string& clip_id);

}  // namespace tubekit
