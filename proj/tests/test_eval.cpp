#include <doctest.h>

#include <json.hpp>

#include "oracles.hpp"
#include "test_util.hpp"
#include "tubekit/errors.hpp"
#include "tubekit/eval.hpp"
#include "tubekit/rng.hpp"

using namespace tubekit;
using testutil::det;

namespace {

ClipDetections clip_of(const std::string& id, int frames, std::vector<Detection> dets) {
  ClipDetections clip;
  clip.clip_id = id;
  clip.num_frames = frames;
  clip.width = 100;
  clip.height = 100;
  clip.detections = std::move(dets);
  clip.sort_canonical();
  return clip;
}

GroundTruthRecord gt_rec(const std::string& clip, int frame, int cls, int track, BBox box) {
  return {clip, frame, cls, track, box};
}

}  // namespace

TEST_CASE("min-max normalization maps the extremes to 0 and 1") {
  auto clips = minmax_normalize(
      {clip_of("c", 1, {det(0, 0, -0.2, {0, 0, 10, 10}), det(0, 0, 0.3, {20, 20, 30, 30}),
                        det(0, 0, 0.8, {40, 40, 50, 50})})},
      MinMaxScope::global);
  REQUIRE(clips[0].detections.size() == 3);
  // Canonical order is score-descending.
  CHECK(clips[0].detections[0].score == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(clips[0].detections[1].score == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(clips[0].detections[2].score == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("normalization scope: global shares one extent, per-clip does not") {
  std::vector<ClipDetections> input = {
      clip_of("a", 1, {det(0, 0, 0.0, {0, 0, 10, 10}), det(0, 0, 1.0, {20, 20, 30, 30})}),
      clip_of("b", 1, {det(0, 0, 0.4, {0, 0, 10, 10}), det(0, 0, 0.6, {20, 20, 30, 30})}),
  };
  auto global = minmax_normalize(input, MinMaxScope::global);
  CHECK(global[1].detections[0].score == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(global[1].detections[1].score == doctest::Approx(0.4).epsilon(1e-12));

  auto per_clip = minmax_normalize(input, MinMaxScope::per_clip);
  CHECK(per_clip[1].detections[0].score == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(per_clip[1].detections[1].score == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("degenerate and empty normalization scopes") {
  // All-equal scores land on 0.5.
  auto flat = minmax_normalize(
      {clip_of("c", 1, {det(0, 0, 0.7, {0, 0, 10, 10}), det(0, 1, 0.7, {20, 20, 30, 30})})},
      MinMaxScope::global);
  for (const Detection& d : flat[0].detections) CHECK(d.score == 0.5);

  // No detections at all: nothing happens, nothing blows up.
  auto empty = minmax_normalize({clip_of("c", 3, {})}, MinMaxScope::global);
  CHECK(empty[0].detections.empty());
  CHECK(empty[0].num_frames == 3);
}

TEST_CASE("normalization preserves score order") {
  Rng rng(23);
  std::vector<Detection> dets;
  for (int i = 0; i < 50; ++i) {
    const double x = rng.uniform(0, 80);
    dets.push_back(det(0, 0, rng.uniform(-5, 5), {x, x, x + 10, x + 10}));
  }
  auto before = clip_of("c", 1, dets);
  auto after = minmax_normalize({before}, MinMaxScope::global)[0];
  REQUIRE(after.detections.size() == before.detections.size());
  // Canonical order sorts by descending score; which box sits where must match.
  for (size_t i = 0; i < before.detections.size(); ++i) {
    CHECK(before.detections[i].box == after.detections[i].box);
    if (i > 0) CHECK(after.detections[i - 1].score >= after.detections[i].score);
  }
}

TEST_CASE("combine at threshold one is the identity for a single source") {
  // Even exact same-class duplicates survive: suppression needs IOU strictly
  // above the threshold, and nothing exceeds 1.
  std::vector<ClipDetections> src = {clip_of(
      "c", 2, {det(0, 0, 0.9, {0, 0, 10, 10}), det(0, 0, 0.9, {0, 0, 10, 10}),
               det(1, 0, 0.4, {5, 5, 15, 15})})};
  auto out = combine({src}, 1.0);
  REQUIRE(out.size() == 1);
  CHECK(out[0].detections == src[0].detections);
}

TEST_CASE("combine pools sources and suppresses cross-source overlaps") {
  std::vector<ClipDetections> s0 = {clip_of("c", 2, {det(0, 1, 0.9, {0, 0, 10, 10})})};
  std::vector<ClipDetections> s1 = {clip_of("c", 2, {det(0, 1, 0.7, {1, 0, 11, 10}),
                                                     det(1, 1, 0.8, {5, 5, 15, 15})})};
  auto out = combine({s0, s1}, 0.3);
  REQUIRE(out.size() == 1);
  // Frame 0: the 0.7 box overlaps the 0.9 box (IOU 9/11) and is suppressed.
  auto f0 = out[0].frame_detections(0);
  REQUIRE(f0.size() == 1);
  CHECK(f0[0].score == 0.9);
  // Frame 1 comes only from the second source.
  auto f1 = out[0].frame_detections(1);
  REQUIRE(f1.size() == 1);
  CHECK(f1[0].score == 0.8);
}

TEST_CASE("combine merges clip geometry across sources") {
  std::vector<ClipDetections> s0 = {clip_of("c", 2, {det(0, 0, 0.5, {0, 0, 10, 10})})};
  std::vector<ClipDetections> s1 = {clip_of("c", 5, {det(4, 0, 0.6, {0, 0, 10, 10})})};
  s1[0].width = 200;
  auto out = combine({s0, s1}, 0.3);
  REQUIRE(out.size() == 1);
  CHECK(out[0].num_frames == 5);
  CHECK(out[0].width == 200);
  CHECK(out[0].detections.size() == 2);
}

TEST_CASE("average_sources merges matched boxes into the seed with the mean score") {
  std::vector<ClipDetections> s0 = {clip_of("c", 1, {det(0, 0, 0.9, {0, 0, 10, 10})})};
  std::vector<ClipDetections> s1 = {clip_of("c", 1, {det(0, 0, 0.5, {1, 0, 11, 10})})};
  auto out = average_sources({s0, s1}, 0.5);
  REQUIRE(out.size() == 1);
  REQUIRE(out[0].detections.size() == 1);
  CHECK(out[0].detections[0].box == BBox{0, 0, 10, 10});  // seed: higher score
  CHECK(out[0].detections[0].score == doctest::Approx(0.7).epsilon(1e-15));
}

TEST_CASE("average_sources keeps unmatched boxes and separates classes/frames") {
  std::vector<ClipDetections> s0 = {clip_of(
      "c", 2, {det(0, 0, 0.9, {0, 0, 10, 10}), det(1, 0, 0.8, {0, 0, 10, 10})})};
  std::vector<ClipDetections> s1 = {clip_of(
      "c", 2, {det(0, 1, 0.6, {0, 0, 10, 10}),      // same box, other class
               det(0, 0, 0.5, {40, 40, 50, 50})})}; // same class, far away
  auto out = average_sources({s0, s1}, 0.5);
  REQUIRE(out.size() == 1);
  REQUIRE(out[0].detections.size() == 4);
  for (const Detection& d : out[0].detections) {
    CHECK((d.score == 0.9 || d.score == 0.8 || d.score == 0.6 || d.score == 0.5));
  }
}

TEST_CASE("average_sources never merges two boxes of the same source") {
  std::vector<ClipDetections> s0 = {clip_of(
      "c", 1, {det(0, 0, 0.9, {0, 0, 10, 10}), det(0, 0, 0.8, {0, 0, 10, 9})})};
  auto out = average_sources({s0}, 0.5);
  REQUIRE(out[0].detections.size() == 2);
  CHECK(out[0].detections[0].score == 0.9);
  CHECK(out[0].detections[1].score == 0.8);
}

TEST_CASE("average_sources averages across three sources") {
  std::vector<std::vector<ClipDetections>> srcs;
  for (double s : {0.9, 0.6, 0.3}) {
    srcs.push_back({clip_of("c", 1, {det(0, 0, s, {0, 0, 10, 10})})});
  }
  auto out = average_sources(srcs, 0.5);
  REQUIRE(out[0].detections.size() == 1);
  CHECK(out[0].detections[0].score == doctest::Approx(0.6).epsilon(1e-15));

  CHECK_THROWS_AS(average_sources(srcs, 0.0), ValidationError);
}

TEST_CASE("mean AP is exactly one for a perfect detector") {
  std::vector<GroundTruthRecord> gt;
  std::vector<Detection> dets;
  for (int f = 0; f < 4; ++f) {
    gt.push_back(gt_rec("c", f, 0, 0, {10.0 + f, 10, 20.0 + f, 20}));
    gt.push_back(gt_rec("c", f, 1, 1, {40, 40, 50, 50}));
    dets.push_back(det(f, 0, 0.9 - 0.01 * f, {10.0 + f, 10, 20.0 + f, 20}));
    dets.push_back(det(f, 1, 0.8 - 0.01 * f, {40, 40, 50, 50}));
  }
  EvalReport report = mean_ap({clip_of("c", 4, dets)}, gt, 0.5);
  CHECK(report.mean_ap == 1.0);
  REQUIRE(report.per_class.size() == 2);
  CHECK(report.per_class[0].tp == 4);
  CHECK(report.per_class[0].fp == 0);
  CHECK(report.per_class[0].ap == 1.0);
  CHECK(report.skipped_classes.empty());
}

TEST_CASE("mean AP hand case: TP, FP, TP gives five sixths") {
  std::vector<GroundTruthRecord> gt = {
      gt_rec("c", 0, 0, 0, {0, 0, 10, 10}),
      gt_rec("c", 0, 0, 1, {30, 30, 40, 40}),
  };
  std::vector<Detection> dets = {
      det(0, 0, 0.9, {0, 0, 10, 10}),    // TP
      det(0, 0, 0.8, {60, 60, 70, 70}),  // FP
      det(0, 0, 0.7, {30, 30, 40, 40}),  // TP
  };
  EvalReport report = mean_ap({clip_of("c", 1, dets)}, gt, 0.5);
  CHECK(report.mean_ap == doctest::Approx(5.0 / 6.0).epsilon(1e-12));
  CHECK(report.per_class[0].tp == 2);
  CHECK(report.per_class[0].fp == 1);
}

TEST_CASE("each ground truth matches at most once; the best overlap wins") {
  std::vector<GroundTruthRecord> gt = {
      gt_rec("c", 0, 0, 0, {0, 0, 10, 10}),
      gt_rec("c", 0, 0, 1, {6, 0, 16, 10}),
  };
  // The top detection overlaps both; it takes the better-IOU one (the second),
  // leaving the first for the weaker detection.
  std::vector<Detection> dets = {
      det(0, 0, 0.9, {5, 0, 15, 10}),  // IOU 1/3 with gt0, 9/11 with gt1
      det(0, 0, 0.8, {0, 0, 10, 10}),  // IOU 1.0 with gt0
  };
  EvalReport report = mean_ap({clip_of("c", 1, dets)}, gt, 0.3);
  CHECK(report.per_class[0].tp == 2);
  CHECK(report.per_class[0].fp == 0);
  CHECK(report.mean_ap == 1.0);
}

TEST_CASE("classes without ground truth are excluded and flagged") {
  std::vector<GroundTruthRecord> gt = {gt_rec("c", 0, 2, 0, {0, 0, 10, 10})};
  std::vector<Detection> dets = {
      det(0, 2, 0.9, {0, 0, 10, 10}),
      det(0, 7, 0.99, {0, 0, 10, 10}),  // class 7 has no ground truth anywhere
  };
  EvalReport report = mean_ap({clip_of("c", 1, dets)}, gt, 0.5);
  CHECK(report.mean_ap == 1.0);  // class 7 does not drag the mean down
  CHECK(report.per_class.count(7) == 0);
  CHECK(report.skipped_classes == std::vector<int>{7});
}

TEST_CASE("a ground-truth class with no detections scores zero AP") {
  std::vector<GroundTruthRecord> gt = {
      gt_rec("c", 0, 0, 0, {0, 0, 10, 10}),
      gt_rec("c", 0, 1, 1, {30, 30, 40, 40}),
  };
  std::vector<Detection> dets = {det(0, 0, 0.9, {0, 0, 10, 10})};
  EvalReport report = mean_ap({clip_of("c", 1, dets)}, gt, 0.5);
  CHECK(report.per_class[1].ap == 0.0);
  CHECK(report.per_class[1].gt == 1);
  CHECK(report.mean_ap == doctest::Approx(0.5).epsilon(1e-12));

  CHECK_THROWS_AS(mean_ap({}, gt, 0.0), ValidationError);
  CHECK_THROWS_AS(mean_ap({}, gt, 1.0001), ValidationError);
}

TEST_CASE("mean AP agrees with the reference on random inputs") {
  Rng rng(99);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<GroundTruthRecord> gt;
    std::vector<oracle::RefGt> ref_gt;
    int track = 0;
    for (const char* clip : {"a", "b"}) {
      for (int f = 0; f < 3; ++f) {
        for (int cls = 0; cls < 3; ++cls) {
          const int n = static_cast<int>(rng.below(3));  // 0..2 boxes
          for (int i = 0; i < n; ++i) {
            const double x = rng.uniform(0, 60);
            const double y = rng.uniform(0, 60);
            const BBox box{x, y, x + rng.uniform(8, 25), y + rng.uniform(8, 25)};
            gt.push_back(gt_rec(clip, f, cls, track++, box));
            ref_gt.push_back({clip, f, cls, box});
          }
        }
      }
    }
    std::vector<ClipDetections> clips;
    std::vector<oracle::RefDet> ref_dets;
    for (const char* clip : {"a", "b"}) {
      std::vector<Detection> dets;
      for (int i = 0; i < 40; ++i) {
        const int f = static_cast<int>(rng.below(3));
        const int cls = static_cast<int>(rng.below(3));
        const double score = rng.uniform();
        BBox box;
        if (!gt.empty() && rng.uniform() < 0.6) {
          // Jittered copy of some ground-truth box to generate matches.
          const GroundTruthRecord& g = gt[rng.below(gt.size())];
          const double dx = rng.uniform(-3, 3), dy = rng.uniform(-3, 3);
          box = {g.box.x0 + dx, g.box.y0 + dy, g.box.x1 + dx, g.box.y1 + dy};
        } else {
          const double x = rng.uniform(0, 60), y = rng.uniform(0, 60);
          box = {x, y, x + rng.uniform(8, 25), y + rng.uniform(8, 25)};
        }
        dets.push_back(det(f, cls, score, box));
        ref_dets.push_back({clip, f, cls, score, box});
      }
      clips.push_back(clip_of(clip, 3, dets));
    }
    EvalReport report = mean_ap(clips, gt, 0.5);
    const double want = oracle::ref_mean_ap(ref_dets, ref_gt, 0.5);
    CHECK(report.mean_ap == doctest::Approx(want).epsilon(1e-10));
  }
}

TEST_CASE("mean AP depends only on the score ranking") {
  Rng rng(3);
  std::vector<GroundTruthRecord> gt;
  std::vector<Detection> dets;
  for (int f = 0; f < 3; ++f) {
    const double x = 10.0 * f;
    gt.push_back(gt_rec("c", f, 0, f, {x, 0, x + 10, 10}));
    dets.push_back(det(f, 0, rng.uniform(0.1, 0.9), {x, 0, x + 10, 10}));
    dets.push_back(det(f, 0, rng.uniform(0.1, 0.9), {x + 50, 50, x + 60, 60}));
  }
  auto base = mean_ap({clip_of("c", 3, dets)}, gt, 0.5);

  std::vector<Detection> warped = dets;
  for (Detection& d : warped) d.score = 0.2 + 0.3 * (d.score * d.score * d.score);
  auto transformed = mean_ap({clip_of("c", 3, warped)}, gt, 0.5);
  CHECK(base.mean_ap == transformed.mean_ap);
}

TEST_CASE("greedy averaging keeps adding sources while they help") {
  std::vector<GroundTruthRecord> gt;
  for (int f = 0; f < 4; ++f) gt.push_back(gt_rec("c", f, 0, 0, {10, 10, 20, 20}));

  NamedSource even{"even", {clip_of("c", 4, {det(0, 0, 0.9, {10, 10, 20, 20}),
                                             det(2, 0, 0.85, {10, 10, 20, 20})})}};
  NamedSource odd{"odd", {clip_of("c", 4, {det(1, 0, 0.8, {10, 10, 20, 20}),
                                           det(3, 0, 0.75, {10, 10, 20, 20})})}};
  NamedSource noise{"noise", {clip_of("c", 4, {det(0, 0, 0.99, {60, 60, 70, 70}),
                                               det(1, 0, 0.98, {60, 60, 70, 70}),
                                               det(2, 0, 0.97, {60, 60, 70, 70}),
                                               det(3, 0, 0.96, {60, 60, 70, 70})})}};
  auto eval_fn = [&](const std::vector<ClipDetections>& clips) {
    return mean_ap(clips, gt, 0.5).mean_ap;
  };

  GreedyAverageResult result = greedy_average({even, odd, noise}, 0.5, 0.01, eval_fn);
  CHECK(result.selected == std::vector<std::string>{"even", "odd"});
  REQUIRE(result.ap_trace.size() == 2);
  CHECK(result.ap_trace[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(result.ap_trace[1] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(eval_fn(result.averaged) == doctest::Approx(1.0).epsilon(1e-12));

  // A single source is returned as-is.
  GreedyAverageResult solo = greedy_average({even}, 0.5, 0.01, eval_fn);
  CHECK(solo.selected == std::vector<std::string>{"even"});

  // A duplicate source adds nothing and is not selected.
  NamedSource even2{"even2", even.clips};
  GreedyAverageResult dup = greedy_average({even, even2}, 0.5, 0.01, eval_fn);
  CHECK(dup.selected == std::vector<std::string>{"even"});

  CHECK_THROWS_AS(greedy_average({}, 0.5, 0.01, eval_fn), ValidationError);
}

TEST_CASE("greedy averaging trace never decreases") {
  Rng rng(31);
  std::vector<GroundTruthRecord> gt;
  for (int f = 0; f < 5; ++f) gt.push_back(gt_rec("c", f, 0, 0, {20, 20, 35, 35}));

  std::vector<NamedSource> sources;
  for (int s = 0; s < 4; ++s) {
    std::vector<Detection> dets;
    for (int f = 0; f < 5; ++f) {
      if (rng.uniform() < 0.7) {
        const double dx = rng.uniform(-2, 2);
        dets.push_back(det(f, 0, rng.uniform(0.5, 1.0), {20 + dx, 20, 35 + dx, 35}));
      }
      if (rng.uniform() < 0.4) {
        const double x = rng.uniform(50, 80);
        dets.push_back(det(f, 0, rng.uniform(0.0, 0.8), {x, x, x + 12, x + 12}));
      }
    }
    sources.push_back({"s" + std::to_string(s), {clip_of("c", 5, dets)}});
  }
  auto eval_fn = [&](const std::vector<ClipDetections>& clips) {
    return mean_ap(clips, gt, 0.5).mean_ap;
  };
  GreedyAverageResult result = greedy_average(sources, 0.5, 1e-9, eval_fn);
  REQUIRE(!result.ap_trace.empty());
  for (size_t i = 1; i < result.ap_trace.size(); ++i) {
    CHECK(result.ap_trace[i] >= result.ap_trace[i - 1]);
  }
  CHECK(eval_fn(result.averaged) == doctest::Approx(result.ap_trace.back()).epsilon(1e-12));
}

TEST_CASE("corloc scores the top-score detection per annotated frame") {
  std::vector<GroundTruthRecord> gt = {
      gt_rec("c", 0, 1, 0, {10, 10, 20, 20}),
      gt_rec("c", 1, 1, 0, {10, 10, 20, 20}),
      gt_rec("c", 2, 1, 0, {10, 10, 20, 20}),
      gt_rec("c", 3, 2, 1, {10, 10, 20, 20}),  // class 2 is not the target
  };
  std::vector<Detection> dets = {
      // Frame 0: the top det localizes regardless of its class label.
      det(0, 5, 0.9, {10, 10, 20, 20}),
      // Frame 1: a stronger but misplaced det wins the frame and misses.
      det(1, 1, 0.95, {60, 60, 70, 70}),
      det(1, 1, 0.5, {10, 10, 20, 20}),
      // Frame 2: IOU exactly 0.5 is not enough (the test is strict).
      det(2, 1, 0.9, {10, 10, 20, 15}),
  };
  CorLocReport report = corloc({clip_of("c", 4, dets)}, gt, {{"c", 1}});
  CHECK(report.frames == 3);  // frame 3 has no target-class annotation
  CHECK(report.localized == 1);
  CHECK(report.ratio == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

  // A clip absent from the target map is a data error.
  CHECK_THROWS_AS(corloc({clip_of("c", 4, dets)}, gt, {{"zzz", 1}}), DataError);
}

TEST_CASE("corloc counts frames without detections as misses") {
  std::vector<GroundTruthRecord> gt = {gt_rec("c", 0, 0, 0, {10, 10, 20, 20})};
  CorLocReport report = corloc({}, gt, {{"c", 0}});
  CHECK(report.frames == 1);
  CHECK(report.localized == 0);
  CHECK(report.ratio == 0.0);

  CorLocReport none = corloc({}, {}, {});
  CHECK(none.frames == 0);
  CHECK(none.ratio == 0.0);
}

TEST_CASE("derive_targets picks the majority class, ties to the smaller id") {
  std::vector<GroundTruthRecord> gt = {
      gt_rec("a", 0, 1, 0, {0, 0, 10, 10}),
      gt_rec("a", 1, 1, 0, {0, 0, 10, 10}),
      gt_rec("a", 0, 2, 1, {20, 20, 30, 30}),
      gt_rec("b", 0, 3, 0, {0, 0, 10, 10}),
      gt_rec("b", 0, 0, 1, {20, 20, 30, 30}),
  };
  auto targets = derive_targets(gt);
  CHECK(targets.at("a") == 1);  // majority
  CHECK(targets.at("b") == 0);  // tie 1:1 between classes 0 and 3
}

TEST_CASE("evaluation report serializes to json and a table") {
  std::vector<GroundTruthRecord> gt = {gt_rec("c", 0, 0, 0, {0, 0, 10, 10})};
  std::vector<Detection> dets = {det(0, 0, 0.9, {0, 0, 10, 10}),
                                 det(0, 4, 0.8, {0, 0, 10, 10})};
  EvalReport report = mean_ap({clip_of("c", 1, dets)}, gt, 0.5);

  auto j = nlohmann::json::parse(report.to_json());
  CHECK(j["mean_ap"] == 1.0);
  CHECK(j["matching_iou"] == 0.5);
  REQUIRE(j["classes"].size() == 1);
  CHECK(j["classes"][0]["class"] == 0);
  CHECK(j["classes"][0]["tp"] == 1);
  CHECK(j["skipped_classes"] == std::vector<int>{4});

  const std::string table = report.to_table();
  CHECK(table.find("class") != std::string::npos);
  CHECK(table.find("mean") != std::string::npos);
  CHECK(table.find("1.0000") != std::string::npos);
  CHECK(table.find("excluded") != std::string::npos);
}
