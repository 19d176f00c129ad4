#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "starc/synth.hpp"

#include <filesystem>

using namespace starc;
namespace fs = std::filesystem;

namespace {

// Fraction of valid frames whose nearest prototype is their true one.
double nearest_prototype_accuracy(const SynthCorpus& c) {
  const Index background = c.prototypes.rows() - 1;
  long hits = 0, total = 0;
  for (std::size_t v = 0; v < c.features.size(); ++v) {
    const auto& f = c.features[v];
    std::vector<Index> truth(static_cast<std::size_t>(f.valid_len), background);
    for (const auto& e : c.truth[v].events)
      for (Index n = e.event.start; n < e.event.end; ++n) truth[static_cast<std::size_t>(n)] = e.concept_id;
    for (Index n = 0; n < f.valid_len; ++n) {
      Index best = 0;
      (c.prototypes.rowwise() - f.spatial.row(n).cast<double>()).rowwise().squaredNorm().minCoeff(&best);
      hits += best == truth[static_cast<std::size_t>(n)];
      ++total;
    }
  }
  return static_cast<double>(hits) / static_cast<double>(total);
}

}  // namespace

TEST_CASE("noise-free frames are exact prototypes") {
  SynthSpec spec;
  spec.n_videos = 5;
  spec.noise_sigma = 0;
  spec.smoothing = 0;
  const auto c = generate_corpus(spec);
  CHECK((c.prototypes * c.prototypes.transpose() - MatrixXd::Identity(25, 25)).cwiseAbs().maxCoeff() < 1e-12);
  for (std::size_t v = 0; v < c.features.size(); ++v) {
    const auto& f = c.features[v];
    CHECK(f.encoded == f.spatial);
    Index covered = 0;
    for (const auto& e : c.truth[v].events) {
      covered += e.event.length();
      for (Index n = e.event.start; n < e.event.end; ++n)
        CHECK((f.spatial.row(n).cast<double>() - c.prototypes.row(e.concept_id)).norm() < 1e-6);
    }
    CHECK(covered <= f.valid_len);
    // Events are separated and the datastore holds one entry per concept.
    for (std::size_t i = 1; i < c.truth[v].events.size(); ++i)
      CHECK(c.truth[v].events[i].event.start > c.truth[v].events[i - 1].event.end);
  }
  CHECK(c.datastore.size() == 24);
  CHECK(c.datastore.find(concept_id(3)) != nullptr);
}

TEST_CASE("background share") {
  SynthSpec spec;
  spec.n_videos = 200;
  const auto c = generate_corpus(spec);
  long event = 0, total = 0;
  for (std::size_t v = 0; v < c.features.size(); ++v) {
    total += c.features[v].valid_len;
    for (const auto& e : c.annotations[v].events) event += e.length();
  }
  const double background = 1 - static_cast<double>(event) / static_cast<double>(total);
  CHECK(background > 0.2);
  CHECK(background < 0.4);
}

TEST_CASE("written corpora are byte identical") {
  SynthSpec spec;
  spec.n_videos = 3;
  spec.seed = 17;
  const fs::path a = fs::temp_directory_path() / "starc_synth_a";
  const fs::path b = fs::temp_directory_path() / "starc_synth_b";
  fs::remove_all(a);
  fs::remove_all(b);
  write_corpus(generate_corpus(spec), a);
  write_corpus(generate_corpus(spec), b);
  int files = 0;
  for (const auto& entry : fs::recursive_directory_iterator(a)) {
    if (!entry.is_regular_file()) continue;
    ++files;
    CHECK(read_file(entry.path()) == read_file(b / fs::relative(entry.path(), a)));
  }
  CHECK(files == 3 + 3);
  spec.seed = 18;
  write_corpus(generate_corpus(spec), b);
  CHECK_FALSE(read_file(a / "features" / "vid0000.sfeat") == read_file(b / "features" / "vid0000.sfeat"));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("concepts separate at low noise and blur at high noise") {
  SynthSpec spec;
  spec.n_videos = 20;
  std::vector<double> acc;
  for (double sigma : {0.05, 0.1, 0.2, 0.4}) {
    spec.noise_sigma = sigma;
    acc.push_back(nearest_prototype_accuracy(generate_corpus(spec)));
  }
  CHECK(acc[0] >= 0.99);
  for (std::size_t i = 1; i < acc.size(); ++i) CHECK(acc[i] <= acc[i - 1]);
  CHECK(acc.back() < 0.9);
}

TEST_CASE("spec parsing") {
  const auto spec = parse_synth_spec(R"({"n_videos": 4, "F": 50, "D": 32, "valid_len": [40, 50], "event_len": [3, 5], "seed": 9})");
  CHECK(spec.n_videos == 4);
  CHECK(spec.event_len == std::pair<int, int>{3, 5});
  CHECK(spec.seed == 9);
  CHECK(spec.noise_sigma == 0.1);

  auto kind = [](const std::string& text) {
    try {
      parse_synth_spec(text);
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::Numerical;
  };
  CHECK(kind(R"({"frames": 4})") == ErrorKind::Config);
  CHECK(kind(R"({"event_len": [5]})") == ErrorKind::Config);
  CHECK(kind(R"({"F": "ten"})") == ErrorKind::Config);
  CHECK(kind("{") == ErrorKind::Config);
  // Nine events of at least 12 frames cannot fit in 100 frames.
  CHECK(kind(R"({"event_len": [12, 20], "events_per_video": [9, 9]})") == ErrorKind::Config);
  CHECK(kind(R"({"D": 10})") == ErrorKind::Config);
}
