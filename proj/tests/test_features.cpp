#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "starc/binary_io.hpp"
#include "starc/features.hpp"

#include <filesystem>

using namespace starc;
namespace fs = std::filesystem;

namespace {

FrameFeatures sample(Index frames, Index dim, Index valid, std::uint64_t seed) {
  Rng rng = make_rng(seed, "test_features");
  FrameFeatures f;
  f.video_id = "v";
  f.valid_len = valid;
  f.spatial = gaussian_matrix<float>(frames, dim, 1.0f, rng);
  f.encoded = gaussian_matrix<float>(frames, dim, 1.0f, rng);
  f.spatial.bottomRows(frames - valid).setZero();
  f.encoded.bottomRows(frames - valid).setZero();
  return f;
}

std::string header(std::uint64_t F, std::uint64_t D, std::uint64_t valid) {
  std::string s = "SFT1";
  binio::put_u64(s, F);
  binio::put_u64(s, D);
  binio::put_u64(s, valid);
  return s;
}

std::string error_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("feature file round trip") {
  const auto f = sample(4, 2, 3, 1);
  const auto bytes = encode_features(f);
  CHECK(bytes.size() == 4 + 24 + 2 * 8 * 4);
  const auto g = decode_features(bytes, "v");
  CHECK(g == f);
  CHECK(encode_features(g) == bytes);
}

TEST_CASE("two saves are byte identical") {
  const fs::path dir = fs::temp_directory_path() / "starc_test_features";
  fs::remove_all(dir);
  const auto f = sample(7, 5, 7, 2);
  save_features(f, dir / "a.sfeat");
  save_features(f, dir / "b.sfeat");
  CHECK(read_file(dir / "a.sfeat") == read_file(dir / "b.sfeat"));
  const auto loaded = load_features(dir / "a.sfeat");
  CHECK(loaded.video_id == "a");
  CHECK(loaded.spatial == f.spatial);
  const auto all = load_features_dir(dir);
  REQUIRE(all.size() == 2);
  CHECK(all[0].video_id == "a");
  CHECK(all[1].video_id == "b");
  fs::remove_all(dir);
}

TEST_CASE("malformed feature files") {
  CHECK(error_of([] { decode_features(header(2, 3, 2) + std::string(5 * 4, '\0'), "x"); }) == "truncated body");
  CHECK(error_of([] { decode_features(header(4, 2, 5) + std::string(16 * 4, '\0'), "x"); }) == "valid_len exceeds F");
  CHECK(error_of([] { decode_features(header(1, 1, 1) + std::string(3 * 4, '\0'), "x"); }) ==
        "header/body size mismatch");
  CHECK(error_of([] { decode_features("SFT2" + header(1, 1, 1).substr(4) + std::string(8, '\0'), "x"); })
            .find("bad magic") == 0);
  CHECK(error_of([] { decode_features("SF", "x"); }).find("truncated") != std::string::npos);
  // Non-zero padding is rejected.
  std::string bytes = header(2, 1, 1);
  binio::put_f32(bytes, 1.0f);
  binio::put_f32(bytes, 2.0f);
  binio::put_f32(bytes, 1.0f);
  binio::put_f32(bytes, 0.0f);
  CHECK(error_of([&] { decode_features(bytes, "x"); }) == "padding rows must be zero");
}

TEST_CASE("byte flips are detected or change the value") {
  const auto f = sample(6, 3, 4, 3);
  const auto bytes = encode_features(f);
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    for (unsigned bit : {0u, 3u, 7u}) {
      std::string flipped = bytes;
      flipped[i] = static_cast<char>(static_cast<unsigned char>(flipped[i]) ^ (1u << bit));
      try {
        const auto g = decode_features(flipped, "v");
        CHECK_FALSE(g == f);
      } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Data);
      }
    }
  }
}

TEST_CASE("highlight labels") {
  const auto a = derive_highlight_labels({"v", 5, {{1, 3}}}, 5, 5);
  CHECK((a.labels == (Mask(5) << false, true, true, false, false).finished()).all());
  CHECK(a.mask.all());

  const auto b = derive_highlight_labels({"v", 4, {{0, 2}, {1, 4}}}, 4, 4);
  CHECK(b.labels.all());

  CHECK(error_of([] { derive_highlight_labels({"v", 4, {{2, 6}}}, 8, 4); }).find("event exceeds valid_len") == 0);

  const auto c = derive_highlight_labels({"v", 6, {{4, 6}}}, 9, 6);
  CHECK(c.mask.count() == 6);
  CHECK_FALSE(c.mask(6));
}

TEST_CASE("labels are monotone in events and count annotated frames") {
  Rng rng = make_rng(0, "label_props");
  for (int inst = 0; inst < 200; ++inst) {
    const Index F = 30, valid = 10 + static_cast<Index>(uniform_index(rng, 21));
    EventAnnotation ann{"v", valid, {}};
    Mask union_frames = Mask::Constant(F, false);
    const int n = static_cast<int>(uniform_index(rng, 5));
    for (int e = 0; e < n; ++e) {
      const Index s = static_cast<Index>(uniform_index(rng, static_cast<std::uint64_t>(valid)));
      const Index len = 1 + static_cast<Index>(uniform_index(rng, static_cast<std::uint64_t>(valid - s)));
      ann.events.push_back({s, s + len});
      union_frames.segment(s, len).setConstant(true);
    }
    std::sort(ann.events.begin(), ann.events.end(), [](auto& x, auto& y) { return x.start < y.start; });
    const auto h = derive_highlight_labels(ann, F, valid);
    CHECK((h.labels && h.mask).count() == union_frames.count());
    CHECK((derive_highlight_labels(ann, F, valid).labels == h.labels).all());
    auto more = ann;
    more.events.push_back({valid - 1, valid});
    const auto h2 = derive_highlight_labels(more, F, valid);
    CHECK(((h.labels && !h2.labels).count() == 0));
  }
}

TEST_CASE("overlap lint") {
  CHECK(lint_annotation({"v", 10, {{0, 3}, {2, 5}}}).size() == 1);
  CHECK(lint_annotation({"v", 10, {{0, 3}, {3, 5}}}).empty());
}

TEST_CASE("annotation lines") {
  const EventAnnotation ann{"vid7", 12, {{0, 4}, {6, 9}}};
  const auto line = format_annotation_line(ann);
  CHECK(line == R"({"events":[[0,4],[6,9]],"valid_len":12,"video_id":"vid7"})");
  const auto back = parse_annotation_line(line);
  CHECK(back.video_id == "vid7");
  CHECK(back.events == ann.events);
  CHECK_THROWS_AS(parse_annotation_line(R"({"video_id":"a","valid_len":3,"events":[[0,4]]})"), Error);
  CHECK_THROWS_AS(parse_annotation_line(R"({"video_id":"a","valid_len":9,"events":[[3,4],[0,1]]})"), Error);
  CHECK_THROWS_AS(parse_annotation_line("not json"), Error);
}

TEST_CASE("config parsing") {
  const auto cfg = parse_config(R"({"tau": 0.25, "K": 6, "top_k": 4, "windows": [4, 16]})");
  CHECK(cfg.tau == 0.25);
  CHECK(cfg.K == 6);
  CHECK(cfg.windows == std::vector<int>{4, 16});
  CHECK(cfg.mu == 0.1);
  CHECK(parse_config(config_to_json(cfg)).top_k == 4);

  auto kind = [](const std::string& text) {
    try {
      parse_config(text);
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::Numerical;
  };
  CHECK(kind(R"({"bogus": 1})") == ErrorKind::Config);
  CHECK(kind(R"({"rho": 0.3})") == ErrorKind::Config);
  CHECK(kind(R"({"tau": -1})") == ErrorKind::Config);
  CHECK(kind(R"({"tau": "x"})") == ErrorKind::Config);
  CHECK(kind("[1, 2]") == ErrorKind::Config);
}

TEST_CASE("defaults") {
  const PipelineConfig cfg;
  CHECK(cfg.tau == 0.5);
  CHECK(cfg.lambda == 6.0);
  CHECK(cfg.mu == 0.1);
  CHECK(cfg.gamma == 0.3);
  CHECK(cfg.rho == 0.0);
  CHECK(cfg.K == 8);
  CHECK(cfg.top_k == 5);
  CHECK(cfg.top_p == 10);
  CHECK(cfg.windows == std::vector<int>{8, 32, 64});
  CHECK(cfg.F_max == 100);
  CHECK_NOTHROW(cfg.validate());
}
