#include "tubekit/flow.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "tubekit/errors.hpp"

namespace tubekit {

namespace fs = std::filesystem;

namespace {

constexpr float kFlowMagic = 202021.25f;

void put_u32(std::string& out, uint32_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
  out.push_back(static_cast<char>((v >> 16) & 0xFF));
  out.push_back(static_cast<char>((v >> 24) & 0xFF));
}

void put_f32(std::string& out, float f) {
  uint32_t bits;
  std::memcpy(&bits, &f, 4);
  put_u32(out, bits);
}

uint32_t get_u32(const unsigned char* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

float get_f32(const unsigned char* p) {
  uint32_t bits = get_u32(p);
  float f;
  std::memcpy(&f, &bits, 4);
  return f;
}

}  // namespace

std::optional<std::pair<double, double>> mean_flow(const FlowField& field, const BBox& box) {
  require_valid(box);
  const BBox frame{0.0, 0.0, static_cast<double>(field.width), static_cast<double>(field.height)};
  if (intersection_area(box, frame) <= 0.0) {
    throw ValidationError("mean_flow: box does not intersect the frame rectangle");
  }
  const double x0 = std::max(box.x0, 0.0);
  const double y0 = std::max(box.y0, 0.0);
  const double x1 = std::min(box.x1, frame.x1);
  const double y1 = std::min(box.y1, frame.y1);

  // Pixel (i,j) has center (i+0.5, j+0.5); include centers in the half-open rect.
  const int ix0 = std::max(0, static_cast<int>(std::ceil(x0 - 0.5)));
  const int iy0 = std::max(0, static_cast<int>(std::ceil(y0 - 0.5)));
  const int ix1 = std::min(field.width, static_cast<int>(std::ceil(x1 - 0.5)));
  const int iy1 = std::min(field.height, static_cast<int>(std::ceil(y1 - 0.5)));
  if (ix0 >= ix1 || iy0 >= iy1) return std::nullopt;

  double su = 0.0, sv = 0.0;
  for (int y = iy0; y < iy1; ++y) {
    const size_t row = field.index(ix0, y);
    for (int x = 0; x < ix1 - ix0; ++x) {
      su += field.u[row + x];
      sv += field.v[row + x];
    }
  }
  const double n = static_cast<double>(ix1 - ix0) * (iy1 - iy0);
  return std::make_pair(su / n, sv / n);
}

FlowField read_flow(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open flow file: " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());

  if (bytes.size() < 12) throw DataError("flow file truncated header: " + path);
  const float magic = get_f32(p);
  if (magic != kFlowMagic) {
    throw DataError("flow file has wrong magic (" + std::to_string(magic) + "): " + path);
  }
  const int32_t w = static_cast<int32_t>(get_u32(p + 4));
  const int32_t h = static_cast<int32_t>(get_u32(p + 8));
  if (w <= 0 || h <= 0 || w > 1 << 16 || h > 1 << 16) {
    throw DataError("flow file has implausible dimensions " + std::to_string(w) + "x" +
                    std::to_string(h) + ": " + path);
  }
  const size_t expect = 12 + static_cast<size_t>(w) * h * 2 * 4;
  if (bytes.size() != expect) {
    throw DataError("flow file payload size mismatch (got " + std::to_string(bytes.size()) +
                    ", want " + std::to_string(expect) + "): " + path);
  }

  FlowField field(w, h);
  const unsigned char* cur = p + 12;
  for (size_t i = 0; i < static_cast<size_t>(w) * h; ++i) {
    field.u[i] = get_f32(cur);
    field.v[i] = get_f32(cur + 4);
    cur += 8;
    if (!std::isfinite(field.u[i]) || !std::isfinite(field.v[i])) {
      throw DataError("flow file contains non-finite displacement: " + path);
    }
  }
  return field;
}

void write_flow(const FlowField& field, const std::string& path) {
  if (field.width <= 0 || field.height <= 0 ||
      field.u.size() != static_cast<size_t>(field.width) * field.height ||
      field.v.size() != field.u.size()) {
    throw ValidationError("write_flow: inconsistent field dimensions");
  }
  std::string bytes;
  bytes.reserve(12 + field.u.size() * 8);
  put_f32(bytes, kFlowMagic);
  put_u32(bytes, static_cast<uint32_t>(field.width));
  put_u32(bytes, static_cast<uint32_t>(field.height));
  for (size_t i = 0; i < field.u.size(); ++i) {
    put_f32(bytes, field.u[i]);
    put_f32(bytes, field.v[i]);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open flow file for writing: " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("short write to flow file: " + path);
}

DirFlowSource::DirFlowSource(std::string flow_dir, std::string clip_id)
    : dir_((fs::path(flow_dir) / clip_id).string()) {}

const FlowField* DirFlowSource::load(int frame, bool back) const {
  const auto key = std::make_pair(frame, back);
  auto it = cache_.find(key);
  if (it != cache_.end()) return it->second.get();
  const fs::path path = fs::path(dir_) / (std::to_string(frame) + (back ? ".bflo" : ".flo"));
  if (!fs::exists(path)) {
    cache_.emplace(key, nullptr);
    return nullptr;
  }
  auto field = std::make_unique<FlowField>(read_flow(path.string()));
  const FlowField* raw = field.get();
  cache_.emplace(key, std::move(field));
  return raw;
}

const FlowField* DirFlowSource::forward(int frame) const { return load(frame, false); }
const FlowField* DirFlowSource::backward(int frame) const { return load(frame, true); }

std::optional<FlowDirInfo> scan_flow_dir(const std::string& flow_dir, const std::string& clip_id) {
  const fs::path dir = fs::path(flow_dir) / clip_id;
  if (!fs::is_directory(dir)) return std::nullopt;
  int max_fwd = -1;
  fs::path first;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() != ".flo") continue;
    int frame;
    try {
      frame = std::stoi(entry.path().stem().string());
    } catch (...) {
      continue;
    }
    if (frame > max_fwd) max_fwd = frame;
    if (first.empty()) first = entry.path();
  }
  if (max_fwd < 0) return std::nullopt;
  const FlowField f = read_flow(first.string());
  // Forward transitions 0..T-2 exist, so the clip has max index + 2 frames.
  return FlowDirInfo{max_fwd + 2, f.width, f.height};
}

}  // namespace tubekit
