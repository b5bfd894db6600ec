#pragma once

#include <array>
#include <vector>

#include "tubekit/detection.hpp"
#include "tubekit/tracker.hpp"

namespace tubekit {

struct TubeletStats {
  double mean = 0.0;
  double median = 0.0;
  double top_k_value = 0.0;  // k-th largest score; min score when length < k
  int k = 0;
  int length = 0;
};

// Gaussian class conditionals over one tubelet statistic.
struct BayesClassifier1D {
  double pos_mean = 0.0;
  double pos_var = 1.0;
  double neg_mean = 0.0;
  double neg_var = 1.0;
  double prior_pos = 0.5;
};

struct Classification {
  bool positive = false;
  double posterior_pos = 0.0;
};

// Replace each node by the highest-scoring same-class still-image detection
// overlapping it with IOU >= maxpool_iou, but only when that detection scores
// above the node.
Tubelet spatial_max_pool(const Tubelet& tubelet, const ClipDetections& clip, double maxpool_iou);

TubeletStats stats(const Tubelet& tubelet, int k);

// Max-likelihood Gaussian fits (variance floored at 1e-6) plus the empirical
// prior; both sample lists need at least two entries.
BayesClassifier1D fit_classifier(const std::vector<double>& pos_samples,
                                 const std::vector<double>& neg_samples);

// Bayes rule over the fitted densities; ties at posterior 0.5 go to positive.
Classification classify(const BayesClassifier1D& c, double statistic);

// Ground-truth labeling for classifier training: a tubelet is positive iff at
// least half of its nodes match a same-class ground-truth box with IOU >= 0.5.
bool label_tubelet(const Tubelet& tubelet, const std::vector<GroundTruthRecord>& gt);

// Classify each tubelet on its top-k statistic, then min-max map node scores
// within each (clip, class, label) group onto the label's target range.
// A group whose scores are all equal maps to the range midpoint.
std::vector<Tubelet> rescore(const std::vector<Tubelet>& tubelets, const BayesClassifier1D& c,
                             int k, std::array<double, 2> positive_range = {0.5, 1.0},
                             std::array<double, 2> negative_range = {0.0, 0.5});

// Flatten tubelet nodes into detection records (for the combination stage).
std::vector<ClipDetections> tubelets_to_detections(const std::vector<Tubelet>& tubelets,
                                                   const std::vector<ClipDetections>& geometry_from);

}  // namespace tubekit
