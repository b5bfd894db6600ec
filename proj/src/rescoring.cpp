#include "tubekit/rescoring.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <tuple>

#include "tubekit/errors.hpp"

namespace tubekit {

Tubelet spatial_max_pool(const Tubelet& tubelet, const ClipDetections& clip, double maxpool_iou) {
  if (maxpool_iou <= 0.0 || maxpool_iou > 1.0) {
    throw ValidationError("spatial_max_pool: iou threshold must be in (0,1]");
  }
  Tubelet out = tubelet;
  for (TubeletNode& node : out.nodes) {
    const Detection* best = nullptr;
    for (const Detection& d : clip.detections) {
      if (d.frame != node.frame || d.class_id != tubelet.class_id) continue;
      if (iou(node.box, d.box) < maxpool_iou) continue;
      if (!best || d.score > best->score ||
          (d.score == best->score && canonical_less(d, *best))) {
        best = &d;
      }
    }
    if (best && best->score > node.score) {
      node.box = best->box;
      node.score = best->score;
      node.snapped = true;
    }
  }
  return out;
}

TubeletStats stats(const Tubelet& tubelet, int k) {
  if (tubelet.nodes.empty()) throw ValidationError("stats: tubelet has no nodes");
  if (k < 1) throw ValidationError("stats: k must be >= 1");

  std::vector<double> scores;
  scores.reserve(tubelet.nodes.size());
  for (const TubeletNode& n : tubelet.nodes) scores.push_back(n.score);
  std::sort(scores.begin(), scores.end(), std::greater<>());

  TubeletStats s;
  s.k = k;
  s.length = static_cast<int>(scores.size());
  double sum = 0.0;
  for (double v : scores) sum += v;
  s.mean = sum / scores.size();
  const size_t n = scores.size();
  s.median = (n % 2 == 1) ? scores[n / 2] : 0.5 * (scores[n / 2 - 1] + scores[n / 2]);
  // Short tubelets fall back to their weakest score rather than extrapolating.
  s.top_k_value = s.length < k ? scores.back() : scores[k - 1];
  return s;
}

BayesClassifier1D fit_classifier(const std::vector<double>& pos_samples,
                                 const std::vector<double>& neg_samples) {
  if (pos_samples.size() < 2 || neg_samples.size() < 2) {
    throw ValidationError("fit_classifier: need at least two samples per label");
  }
  static constexpr double kVarFloor = 1e-6;
  auto fit = [](const std::vector<double>& xs, double* mean, double* var) {
    double sum = 0.0;
    for (double x : xs) sum += x;
    *mean = sum / xs.size();
    double ss = 0.0;
    for (double x : xs) ss += (x - *mean) * (x - *mean);
    *var = std::max(ss / xs.size(), kVarFloor);
  };
  BayesClassifier1D c;
  fit(pos_samples, &c.pos_mean, &c.pos_var);
  fit(neg_samples, &c.neg_mean, &c.neg_var);
  c.prior_pos =
      static_cast<double>(pos_samples.size()) / (pos_samples.size() + neg_samples.size());
  return c;
}

Classification classify(const BayesClassifier1D& c, double statistic) {
  if (c.pos_var <= 0.0 || c.neg_var <= 0.0 || c.prior_pos <= 0.0 || c.prior_pos >= 1.0) {
    throw ValidationError("classify: classifier parameters out of range");
  }
  auto log_gauss = [](double x, double mean, double var) {
    constexpr double kTwoPi = 6.283185307179586476925286766559;
    const double d = x - mean;
    return -0.5 * std::log(kTwoPi * var) - d * d / (2.0 * var);
  };
  const double lp = std::log(c.prior_pos) + log_gauss(statistic, c.pos_mean, c.pos_var);
  const double ln = std::log(1.0 - c.prior_pos) + log_gauss(statistic, c.neg_mean, c.neg_var);
  const double m = std::max(lp, ln);
  const double wp = std::exp(lp - m);
  const double wn = std::exp(ln - m);
  Classification out;
  out.posterior_pos = wp / (wp + wn);
  out.positive = out.posterior_pos >= 0.5;
  return out;
}

bool label_tubelet(const Tubelet& tubelet, const std::vector<GroundTruthRecord>& gt) {
  if (tubelet.nodes.empty()) return false;
  size_t matched = 0;
  for (const TubeletNode& node : tubelet.nodes) {
    for (const GroundTruthRecord& g : gt) {
      if (g.clip_id != tubelet.clip_id || g.frame != node.frame ||
          g.class_id != tubelet.class_id) {
        continue;
      }
      if (iou(node.box, g.box) >= 0.5) {
        ++matched;
        break;
      }
    }
  }
  return 2 * matched >= tubelet.nodes.size();
}

std::vector<Tubelet> rescore(const std::vector<Tubelet>& tubelets, const BayesClassifier1D& c,
                             int k, std::array<double, 2> positive_range,
                             std::array<double, 2> negative_range) {
  for (auto r : {positive_range, negative_range}) {
    if (!(r[0] <= r[1])) throw ValidationError("rescore: target range inverted");
  }
  std::vector<Tubelet> out = tubelets;
  std::vector<bool> positive(out.size());
  using Key = std::tuple<std::string, int, bool>;
  struct Extent {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
  };
  std::map<Key, Extent> groups;
  for (size_t i = 0; i < out.size(); ++i) {
    positive[i] = classify(c, stats(out[i], k).top_k_value).positive;
    Extent& e = groups[{out[i].clip_id, out[i].class_id, positive[i]}];
    for (const TubeletNode& n : out[i].nodes) {
      e.lo = std::min(e.lo, n.score);
      e.hi = std::max(e.hi, n.score);
    }
  }
  for (size_t i = 0; i < out.size(); ++i) {
    const Extent& e = groups[{out[i].clip_id, out[i].class_id, positive[i]}];
    const auto& range = positive[i] ? positive_range : negative_range;
    for (TubeletNode& n : out[i].nodes) {
      if (e.hi == e.lo) {
        n.score = 0.5 * (range[0] + range[1]);
      } else {
        n.score = range[0] + (n.score - e.lo) / (e.hi - e.lo) * (range[1] - range[0]);
      }
    }
  }
  return out;
}

std::vector<ClipDetections> tubelets_to_detections(
    const std::vector<Tubelet>& tubelets, const std::vector<ClipDetections>& geometry_from) {
  std::map<std::string, const ClipDetections*> geom;
  for (const ClipDetections& c : geometry_from) geom[c.clip_id] = &c;

  std::map<std::string, ClipDetections> clips;
  for (const Tubelet& t : tubelets) {
    auto git = geom.find(t.clip_id);
    if (git == geom.end()) {
      throw DataError("tubelets_to_detections: no geometry for clip '" + t.clip_id + "'");
    }
    const ClipDetections& src = *git->second;
    ClipDetections& clip = clips[t.clip_id];
    if (clip.detections.empty() && clip.clip_id.empty()) {
      clip.clip_id = src.clip_id;
      clip.num_frames = src.num_frames;
      clip.width = src.width;
      clip.height = src.height;
    }
    for (const TubeletNode& n : t.nodes) {
      Detection d;
      d.frame = n.frame;
      d.class_id = t.class_id;
      d.score = n.score;
      d.box = n.box;
      auto clamped = clamp_to_frame(d, clip.width, clip.height);
      if (clamped) clip.detections.push_back(*clamped);
    }
  }
  std::vector<ClipDetections> out;
  out.reserve(clips.size());
  for (auto& [id, clip] : clips) {
    clip.sort_canonical();
    out.push_back(std::move(clip));
  }
  return out;
}

}  // namespace tubekit
