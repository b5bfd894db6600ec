#include <doctest.h>

#include <cstring>
#include <filesystem>

#include "test_util.hpp"
#include "tubekit/errors.hpp"
#include "tubekit/flow.hpp"
#include "tubekit/io.hpp"
#include "tubekit/rng.hpp"

using namespace tubekit;
using testutil::TempDir;
using testutil::det;

namespace {

ClipDetections make_clip(const std::string& id) {
  ClipDetections clip;
  clip.clip_id = id;
  clip.num_frames = 5;
  clip.width = 100;
  clip.height = 80;
  clip.detections = {
      det(0, 2, 0.75, {1, 2, 11, 12}),
      det(0, 0, 0.5, {3.25, 4.5, 9.75, 14.125}, "rpn"),
      det(3, 1, -0.25, {0, 0, 100, 80}),
  };
  clip.sort_canonical();
  return clip;
}

}  // namespace

TEST_CASE("detection records round-trip bit-exactly") {
  std::vector<ClipDetections> clips = {make_clip("a"), make_clip("b")};
  const std::string text = detections_to_jsonl(clips);
  auto parsed = group_records(parse_detection_records(text, "<mem>"),
                              {{"a", {5, 100, 80}}, {"b", {5, 100, 80}}});
  REQUIRE(parsed.size() == 2);
  CHECK(parsed[0].detections == clips[0].detections);
  CHECK(parsed[1].detections == clips[1].detections);
  // Serialisation is canonical: re-serialising the parse reproduces the bytes.
  CHECK(detections_to_jsonl(parsed) == text);
}

TEST_CASE("detection file round-trip through disk") {
  TempDir tmp("io_det");
  std::vector<ClipDetections> clips = {make_clip("clip_x")};
  const std::string path = tmp.file("dets.jsonl");
  write_detections(clips, path);
  auto back = read_detections(path, {{"clip_x", {5, 100, 80}}});
  REQUIRE(back.size() == 1);
  CHECK(back[0].detections == clips[0].detections);
  CHECK(back[0].num_frames == 5);
  // No temp file left behind by the atomic write.
  CHECK_FALSE(std::filesystem::exists(path + ".tmp"));
}

TEST_CASE("parser skips blank lines and reports the 1-based line number") {
  const std::string text =
      "\n"
      R"({"clip":"a","frame":0,"class":0,"score":1.0,"bbox":[0,0,1,1]})"
      "\n\n"
      "{bad json\n";
  try {
    parse_detection_records(text, "input.jsonl");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.path() == "input.jsonl");
    CHECK(e.line() == 4);
    CHECK(std::string(e.what()).find("input.jsonl:4") != std::string::npos);
  }
}

TEST_CASE("malformed detection lines raise located parse errors") {
  // field -> offending line
  const std::pair<const char*, const char*> cases[] = {
      {"<line>", "[1,2,3]"},                                                              // not an object
      {"clip", R"({"frame":0,"class":0,"score":1,"bbox":[0,0,1,1]})"},                    // missing
      {"clip", R"({"clip":"","frame":0,"class":0,"score":1,"bbox":[0,0,1,1]})"},          // empty
      {"clip", R"({"clip":7,"frame":0,"class":0,"score":1,"bbox":[0,0,1,1]})"},           // wrong type
      {"frame", R"({"clip":"a","class":0,"score":1,"bbox":[0,0,1,1]})"},                  // missing
      {"frame", R"({"clip":"a","frame":-1,"class":0,"score":1,"bbox":[0,0,1,1]})"},       // negative
      {"frame", R"({"clip":"a","frame":"x","class":0,"score":1,"bbox":[0,0,1,1]})"},      // wrong type
      {"class", R"({"clip":"a","frame":0,"score":1,"bbox":[0,0,1,1]})"},                  // missing
      {"class", R"({"clip":"a","frame":0,"class":-2,"score":1,"bbox":[0,0,1,1]})"},       // negative
      {"score", R"({"clip":"a","frame":0,"class":0,"bbox":[0,0,1,1]})"},                  // missing
      {"score", R"({"clip":"a","frame":0,"class":0,"score":"hi","bbox":[0,0,1,1]})"},     // type
      {"bbox", R"({"clip":"a","frame":0,"class":0,"score":1})"},                          // missing
      {"bbox", R"({"clip":"a","frame":0,"class":0,"score":1,"bbox":[0,0,1]})"},           // short
      {"bbox", R"({"clip":"a","frame":0,"class":0,"score":1,"bbox":[0,0,1,"y"]})"},       // type
      {"bbox", R"({"clip":"a","frame":0,"class":0,"score":1,"bbox":[5,0,1,1]})"},         // inverted
      {"bbox", R"({"clip":"a","frame":0,"class":0,"score":1,"bbox":[0,0,0,1]})"},         // empty box
      {"source", R"({"clip":"a","frame":0,"class":0,"score":1,"bbox":[0,0,1,1],"source":3})"},
      {"extra", R"({"clip":"a","frame":0,"class":0,"score":1,"bbox":[0,0,1,1],"extra":0})"},
  };
  for (const auto& [field, line] : cases) {
    CAPTURE(line);
    try {
      parse_detection_records(line, "t");
      FAIL_CHECK("no error for: " << line);
    } catch (const ParseError& e) {
      CHECK(e.field() == field);
    }
  }
  // Non-finite score is rejected by JSON syntax already; use a huge exponent
  // instead, which parses to inf and must be caught by the finiteness check.
  CHECK_THROWS_AS(
      parse_detection_records(R"({"clip":"a","frame":0,"class":0,"score":1e999,"bbox":[0,0,1,1]})", "t"),
      ParseError);
}

TEST_CASE("group_records infers geometry from the data") {
  std::vector<DetectionRecord> recs;
  recs.push_back({"c", det(7, 0, 0.5, {0, 0, 31.5, 8})});
  recs.push_back({"c", det(2, 1, 0.25, {10, 10, 20, 23.001})});
  auto clips = group_records(recs);
  REQUIRE(clips.size() == 1);
  CHECK(clips[0].num_frames == 8);   // max frame + 1
  CHECK(clips[0].width == 32);       // ceil(31.5)
  CHECK(clips[0].height == 24);      // ceil(23.001)
}

TEST_CASE("group_records honours explicit geometry and clamps at ingest") {
  std::vector<DetectionRecord> recs;
  recs.push_back({"c", det(0, 0, 0.5, {-4, -4, 12, 12})});
  auto clips = group_records(recs, {{"c", {3, 10, 10}}});
  REQUIRE(clips.size() == 1);
  CHECK(clips[0].num_frames == 3);
  CHECK(clips[0].detections[0].box == BBox{0, 0, 10, 10});

  // Frame beyond the declared clip length is a data error.
  recs.push_back({"c", det(3, 0, 0.5, {0, 0, 5, 5})});
  CHECK_THROWS_AS(group_records(recs, {{"c", {3, 10, 10}}}), DataError);
}

TEST_CASE("group_records rejects boxes fully outside the frame") {
  std::vector<DetectionRecord> recs;
  recs.push_back({"c", det(0, 0, 0.5, {50, 50, 60, 60})});
  CHECK_THROWS_AS(group_records(recs, {{"c", {1, 10, 10}}}), DataError);
}

TEST_CASE("group_records enforces the class range when configured") {
  std::vector<DetectionRecord> recs;
  recs.push_back({"c", det(0, 5, 0.5, {0, 0, 5, 5})});
  CHECK_NOTHROW(group_records(recs, {}, 6));
  CHECK_THROWS_AS(group_records(recs, {}, 5), DataError);
  CHECK_NOTHROW(group_records(recs, {}, std::nullopt));
}

TEST_CASE("group_records rejects non-positive declared geometry") {
  std::vector<DetectionRecord> recs;
  recs.push_back({"c", det(0, 0, 0.5, {0, 0, 5, 5})});
  CHECK_THROWS_AS(group_records(recs, {{"c", {0, 10, 10}}}), ValidationError);
  CHECK_THROWS_AS(group_records(recs, {{"c", {3, -1, 10}}}), ValidationError);
}

TEST_CASE("ground truth round-trip and validation") {
  std::vector<GroundTruthRecord> gt = {
      {"a", 0, 2, 1, {1, 1, 9, 9}},
      {"a", 1, 2, 1, {2, 1, 10, 9}},
      {"a", 0, 0, 2, {20, 20, 30, 30}},
  };
  const std::string text = ground_truth_to_jsonl(gt);
  auto back = parse_ground_truth(text, "<mem>");
  REQUIRE(back.size() == 3);
  CHECK(ground_truth_to_jsonl(back) == text);

  TempDir tmp("io_gt");
  write_ground_truth(gt, tmp.file("gt.jsonl"));
  CHECK(ground_truth_to_jsonl(read_ground_truth(tmp.file("gt.jsonl"))) == text);
}

TEST_CASE("ground truth rejects class changes and duplicate keys") {
  const std::string class_flip =
      R"({"clip":"a","frame":0,"class":1,"track":7,"bbox":[0,0,1,1]})"
      "\n"
      R"({"clip":"a","frame":1,"class":2,"track":7,"bbox":[0,0,1,1]})";
  CHECK_THROWS_AS(parse_ground_truth(class_flip, "t"), ParseError);

  const std::string dup =
      R"({"clip":"a","frame":0,"class":1,"track":7,"bbox":[0,0,1,1]})"
      "\n"
      R"({"clip":"a","frame":0,"class":1,"track":7,"bbox":[2,2,3,3]})";
  try {
    parse_ground_truth(dup, "t");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
    CHECK(std::string(e.what()).find("line 1") != std::string::npos);
  }

  // Same track id in a different clip is fine.
  const std::string ok =
      R"({"clip":"a","frame":0,"class":1,"track":7,"bbox":[0,0,1,1]})"
      "\n"
      R"({"clip":"b","frame":0,"class":2,"track":7,"bbox":[0,0,1,1]})";
  CHECK(parse_ground_truth(ok, "t").size() == 2);
}

TEST_CASE("tubelets round-trip") {
  Tubelet t;
  t.clip_id = "c";
  t.class_id = 4;
  t.anchor_index = 1;
  t.nodes = {
      {3, {0, 0, 10, 10}, 0.5, false},
      {4, {1, 0, 11, 10}, 0.9, true},
      {5, {2, 0, 12, 10}, 0.45, false},
  };
  TempDir tmp("io_tub");
  write_tubelets({t}, tmp.file("t.jsonl"));
  auto back = read_tubelets(tmp.file("t.jsonl"));
  REQUIRE(back.size() == 1);
  CHECK(back[0].clip_id == "c");
  CHECK(back[0].class_id == 4);
  CHECK(back[0].anchor_index == 1);
  REQUIRE(back[0].nodes.size() == 3);
  for (size_t i = 0; i < 3; ++i) {
    CHECK(back[0].nodes[i].frame == t.nodes[i].frame);
    CHECK(back[0].nodes[i].box == t.nodes[i].box);
    CHECK(back[0].nodes[i].score == t.nodes[i].score);
    CHECK(back[0].nodes[i].snapped == t.nodes[i].snapped);
  }
  CHECK(tubelets_to_jsonl(back) == tubelets_to_jsonl({t}));
}

TEST_CASE("malformed tubelet lines") {
  TempDir tmp("io_tub_bad");
  const char* cases[] = {
      R"({"clip":"c","class":0,"anchor":0})",                                             // no nodes
      R"({"clip":"c","class":0,"anchor":0,"nodes":[]})",                                  // empty nodes
      R"({"clip":"c","class":0,"anchor":2,"nodes":[{"frame":0,"bbox":[0,0,1,1],"score":1,"snapped":true}]})",  // anchor range
      R"({"clip":"c","class":0,"anchor":-1,"nodes":[{"frame":0,"bbox":[0,0,1,1],"score":1,"snapped":true}]})",
      R"({"clip":"c","class":0,"anchor":0,"nodes":[{"frame":0,"bbox":[0,0,1,1],"score":1,"snapped":true},{"frame":2,"bbox":[0,0,1,1],"score":1,"snapped":true}]})",  // gap
      R"({"clip":"c","class":0,"anchor":0,"nodes":[{"frame":0,"bbox":[0,0,1,1],"score":1}]})",  // missing snapped
      R"({"clip":"c","class":0,"anchor":0,"nodes":[{"frame":0,"bbox":[0,0,1,1],"score":1,"snapped":true,"x":1}]})",  // unknown node key
  };
  for (const char* line : cases) {
    CAPTURE(line);
    testutil::write_text(tmp.file("bad.jsonl"), line);
    CHECK_THROWS_AS(read_tubelets(tmp.file("bad.jsonl")), ParseError);
  }
}

TEST_CASE("classifier round-trip and validation") {
  BayesClassifier1D c;
  c.pos_mean = 0.875;
  c.pos_var = 0.0125;
  c.neg_mean = 0.25;
  c.neg_var = 0.03125;
  c.prior_pos = 0.625;
  TempDir tmp("io_clf");
  write_classifier(c, tmp.file("c.json"));
  BayesClassifier1D back = read_classifier(tmp.file("c.json"));
  CHECK(back.pos_mean == c.pos_mean);
  CHECK(back.pos_var == c.pos_var);
  CHECK(back.neg_mean == c.neg_mean);
  CHECK(back.neg_var == c.neg_var);
  CHECK(back.prior_pos == c.prior_pos);

  const char* bad[] = {
      R"({"pos_mean":0,"pos_var":0,"neg_mean":0,"neg_var":1,"prior_pos":0.5})",   // zero variance
      R"({"pos_mean":0,"pos_var":1,"neg_mean":0,"neg_var":-1,"prior_pos":0.5})",  // negative variance
      R"({"pos_mean":0,"pos_var":1,"neg_mean":0,"neg_var":1,"prior_pos":1.0})",   // prior out of range
      R"({"pos_mean":0,"pos_var":1,"neg_mean":0,"neg_var":1})",                   // missing prior
      R"({"pos_mean":0,"pos_var":1,"neg_mean":0,"neg_var":1,"prior_pos":0.5,"z":1})",  // unknown key
      R"([1,2,3])",                                                               // not an object
      "{nope",                                                                    // invalid JSON
  };
  for (const char* doc : bad) {
    CAPTURE(doc);
    testutil::write_text(tmp.file("bad.json"), doc);
    CHECK_THROWS_AS(read_classifier(tmp.file("bad.json")), ParseError);
  }
}

TEST_CASE("flow file byte layout is pinned") {
  // Header: f32 magic 202021.25, u32 width, u32 height, little-endian.
  // Payload: row-major (u, v) f32 pairs. A 2x2 field is 12 + 32 bytes.
  FlowField f(2, 2);
  f.u = {1.0f, 2.0f, 3.0f, 4.0f};
  f.v = {-1.0f, -2.0f, -3.0f, -4.0f};
  TempDir tmp("io_flo");
  write_flow(f, tmp.file("0.flo"));
  const std::string bytes = testutil::slurp(tmp.file("0.flo"));
  REQUIRE(bytes.size() == 44);

  auto u32_at = [&](size_t off) {
    return static_cast<uint32_t>(static_cast<unsigned char>(bytes[off])) |
           (static_cast<uint32_t>(static_cast<unsigned char>(bytes[off + 1])) << 8) |
           (static_cast<uint32_t>(static_cast<unsigned char>(bytes[off + 2])) << 16) |
           (static_cast<uint32_t>(static_cast<unsigned char>(bytes[off + 3])) << 24);
  };
  auto f32_at = [&](size_t off) {
    uint32_t b = u32_at(off);
    float v;
    std::memcpy(&v, &b, 4);
    return v;
  };
  CHECK(f32_at(0) == 202021.25f);
  CHECK(u32_at(4) == 2);
  CHECK(u32_at(8) == 2);
  // First pixel's (u, v) pair, then the second pixel's u.
  CHECK(f32_at(12) == 1.0f);
  CHECK(f32_at(16) == -1.0f);
  CHECK(f32_at(20) == 2.0f);

  FlowField back = read_flow(tmp.file("0.flo"));
  CHECK(back.width == 2);
  CHECK(back.height == 2);
  CHECK(back.u == f.u);
  CHECK(back.v == f.v);
}

TEST_CASE("flow round-trips random fields bit-exactly") {
  Rng rng(7);
  TempDir tmp("io_flo_rand");
  for (int trial = 0; trial < 25; ++trial) {
    const int w = 1 + static_cast<int>(rng.below(9));
    const int h = 1 + static_cast<int>(rng.below(9));
    FlowField f(w, h);
    for (size_t i = 0; i < f.u.size(); ++i) {
      f.u[i] = static_cast<float>(rng.uniform(-30, 30));
      f.v[i] = static_cast<float>(rng.uniform(-30, 30));
    }
    const std::string path = tmp.file("r.flo");
    write_flow(f, path);
    FlowField back = read_flow(path);
    REQUIRE(back.width == w);
    REQUIRE(back.height == h);
    CHECK(back.u == f.u);
    CHECK(back.v == f.v);
  }
}

TEST_CASE("malformed flow files") {
  TempDir tmp("io_flo_bad");
  const std::string path = tmp.file("x.flo");

  // Too short for a header.
  testutil::write_text(path, "PIEH");
  CHECK_THROWS_AS(read_flow(path), DataError);

  // Wrong magic.
  FlowField f(1, 1);
  f.u = {0.0f};
  f.v = {0.0f};
  write_flow(f, path);
  std::string bytes = testutil::slurp(path);
  bytes[0] = 'x';
  testutil::write_text(path, bytes);
  CHECK_THROWS_AS(read_flow(path), DataError);

  // Truncated payload.
  write_flow(f, path);
  bytes = testutil::slurp(path);
  testutil::write_text(path, bytes.substr(0, bytes.size() - 1));
  CHECK_THROWS_AS(read_flow(path), DataError);

  // Trailing garbage.
  testutil::write_text(path, bytes + "zz");
  CHECK_THROWS_AS(read_flow(path), DataError);

  // Implausible dimensions (claims width 0).
  write_flow(f, path);
  bytes = testutil::slurp(path);
  bytes[4] = bytes[5] = bytes[6] = bytes[7] = 0;
  testutil::write_text(path, bytes);
  CHECK_THROWS_AS(read_flow(path), DataError);

  // Non-finite displacement.
  write_flow(f, path);
  bytes = testutil::slurp(path);
  bytes[12] = bytes[13] = 0;
  bytes[14] = static_cast<char>(0x80);
  bytes[15] = static_cast<char>(0x7F);  // +inf
  testutil::write_text(path, bytes);
  CHECK_THROWS_AS(read_flow(path), DataError);

  CHECK_THROWS_AS(read_flow(tmp.file("missing.flo")), DataError);
}

TEST_CASE("flow directory source resolves frames and caches") {
  TempDir tmp("io_flodir");
  std::filesystem::create_directories(tmp.path / "clipA");
  FlowField f(3, 2);
  f.u.assign(6, 1.5f);
  f.v.assign(6, -0.5f);
  write_flow(f, (tmp.path / "clipA" / "0.flo").string());
  write_flow(f, (tmp.path / "clipA" / "1.bflo").string());

  DirFlowSource src(tmp.path.string(), "clipA");
  const FlowField* fwd = src.forward(0);
  REQUIRE(fwd != nullptr);
  CHECK(fwd->u[0] == 1.5f);
  CHECK(src.forward(0) == fwd);  // cached, same object
  CHECK(src.forward(1) == nullptr);
  REQUIRE(src.backward(1) != nullptr);
  CHECK(src.backward(0) == nullptr);
}

TEST_CASE("scan_flow_dir reports geometry or nothing") {
  TempDir tmp("io_scan");
  CHECK_FALSE(scan_flow_dir(tmp.path.string(), "nope").has_value());

  std::filesystem::create_directories(tmp.path / "c");
  CHECK_FALSE(scan_flow_dir(tmp.path.string(), "c").has_value());  // no .flo files

  FlowField f(7, 4);
  f.u.assign(28, 0.0f);
  f.v.assign(28, 0.0f);
  write_flow(f, (tmp.path / "c" / "0.flo").string());
  write_flow(f, (tmp.path / "c" / "3.flo").string());
  auto info = scan_flow_dir(tmp.path.string(), "c");
  REQUIRE(info.has_value());
  // Forward transitions cover 0..T-2, so max index 3 means 5 frames.
  CHECK(info->num_frames == 5);
  CHECK(info->width == 7);
  CHECK(info->height == 4);
}

TEST_CASE("atomic_write_file creates parents and replaces content") {
  TempDir tmp("io_atomic");
  const std::string path = (tmp.path / "deep" / "nested" / "out.txt").string();
  atomic_write_file(path, "one");
  CHECK(testutil::slurp(path) == "one");
  atomic_write_file(path, "two");
  CHECK(testutil::slurp(path) == "two");
  CHECK_FALSE(std::filesystem::exists(path + ".tmp"));
}

TEST_CASE("read_text_file on a missing path is a data error") {
  CHECK_THROWS_AS(read_text_file("/nonexistent/tubekit/file"), DataError);
}

TEST_CASE("fnv1a64 matches the published test vectors") {
  CHECK(fnv1a64("") == 0xCBF29CE484222325ULL);
  CHECK(fnv1a64("a") == 0xAF63DC4C8601EC8CULL);
  CHECK(fnv1a64("foobar") == 0x85944171F73967E8ULL);
  CHECK(hash_hex("") == "cbf29ce484222325");
  CHECK(hash_hex("foobar") == "85944171f73967e8");

  TempDir tmp("io_hash");
  testutil::write_text(tmp.file("h.txt"), "foobar");
  CHECK(hash_file(tmp.file("h.txt")) == "85944171f73967e8");
}
