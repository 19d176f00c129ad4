#include "starc/synth.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <algorithm>

namespace starc {

namespace fs = std::filesystem;
using nlohmann::json;

void SynthSpec::validate() const {
  if (n_videos < 0) throw config_error("synth: n_videos must be >= 0");
  if (F < 1 || D < 1) throw config_error("synth: F and D must be >= 1");
  auto check_range = [](std::pair<int, int> r, int lo, const char* name) {
    if (r.first < lo || r.second < r.first) throw config_error(std::string("synth: bad range ") + name);
  };
  check_range(events_per_video, 0, "events_per_video");
  check_range(event_len, 1, "event_len");
  check_range(valid_len, 1, "valid_len");
  if (valid_len.second > F) throw config_error("synth: valid_len exceeds F");
  if (!(noise_sigma >= 0)) throw config_error("synth: noise_sigma must be >= 0");
  if (n_caption_concepts < events_per_video.second)
    throw config_error("synth: need at least as many concepts as events per video");
  if (n_caption_concepts + 1 > D) throw config_error("synth: D must exceed the number of concepts");
  if (smoothing < 0) throw config_error("synth: smoothing must be >= 0");
  const long min_needed = static_cast<long>(events_per_video.first) * event_len.first +
                          std::max(0, events_per_video.first - 1);
  if (min_needed > valid_len.second) throw config_error("synth: events do not fit in the video");
}

std::string concept_id(int c) { return fmt::format("concept_{:03d}", c); }

namespace {

MatrixXd orthonormal_prototypes(Index count, Index dim, Rng& rng) {
  MatrixXd v = gaussian_matrix(count, dim, 1.0, rng);
  // Modified Gram-Schmidt over rows.
  for (Index i = 0; i < count; ++i) {
    for (Index j = 0; j < i; ++j) v.row(i) -= v.row(i).dot(v.row(j)) * v.row(j);
    v.row(i).normalize();
  }
  return v;
}

int uniform_in(Rng& rng, std::pair<int, int> r) {
  return r.first + static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(r.second - r.first + 1)));
}

}  // namespace

SynthCorpus generate_corpus(const SynthSpec& spec) {
  spec.validate();
  SynthCorpus corpus;
  Rng proto_rng = make_rng(spec.seed, "synth_prototypes");
  corpus.prototypes = orthonormal_prototypes(spec.n_caption_concepts + 1, spec.D, proto_rng);
  const auto background = corpus.prototypes.row(spec.n_caption_concepts);

  std::vector<DatastoreEntry> entries;
  for (int c = 0; c < spec.n_caption_concepts; ++c)
    entries.push_back({concept_id(c), fmt::format("caption for concept {}", c), corpus.prototypes.row(c).transpose()});
  corpus.datastore = Datastore::build(std::move(entries));

  for (int v = 0; v < spec.n_videos; ++v) {
    const std::string vid = fmt::format("{}{:04d}", spec.id_prefix, v);
    Rng rng = make_rng(spec.seed, "synth_video", vid);

    int valid = 0, n_events = 0;
    std::vector<int> lengths;
    long slack = -1;
    for (int attempt = 0; attempt < 100 && slack < 0; ++attempt) {
      valid = uniform_in(rng, spec.valid_len);
      n_events = uniform_in(rng, spec.events_per_video);
      lengths.assign(static_cast<std::size_t>(n_events), 0);
      long total = std::max(0, n_events - 1);
      for (auto& l : lengths) total += (l = uniform_in(rng, spec.event_len));
      slack = valid - total;
    }
    if (slack < 0) throw config_error("synth: could not fit events into " + vid);

    // Spread the free background frames over the n_events + 1 gaps.
    std::vector<long> cuts(static_cast<std::size_t>(n_events));
    for (auto& c : cuts) c = static_cast<long>(uniform_index(rng, static_cast<std::uint64_t>(slack + 1)));
    std::sort(cuts.begin(), cuts.end());

    std::vector<int> concepts(static_cast<std::size_t>(spec.n_caption_concepts));
    for (int c = 0; c < spec.n_caption_concepts; ++c) concepts[static_cast<std::size_t>(c)] = c;
    for (int i = 0; i < n_events; ++i)
      std::swap(concepts[static_cast<std::size_t>(i)],
                concepts[static_cast<std::size_t>(i) + uniform_index(rng, static_cast<std::uint64_t>(spec.n_caption_concepts - i))]);

    EventAnnotation ann{vid, valid, {}};
    TruthRecord truth{vid, {}};
    std::vector<int> frame_concept(static_cast<std::size_t>(valid), -1);
    long cursor = 0, prev_cut = 0;
    for (int i = 0; i < n_events; ++i) {
      cursor += cuts[static_cast<std::size_t>(i)] - prev_cut + (i > 0 ? 1 : 0);
      prev_cut = cuts[static_cast<std::size_t>(i)];
      const Event ev{cursor, cursor + lengths[static_cast<std::size_t>(i)]};
      const int concept_index = concepts[static_cast<std::size_t>(i)];
      for (Index n = ev.start; n < ev.end; ++n) frame_concept[static_cast<std::size_t>(n)] = concept_index;
      ann.events.push_back(ev);
      truth.events.push_back({ev, concept_index});
      cursor = ev.end;
    }

    MatrixXd spatial = MatrixXd::Zero(spec.F, spec.D);
    const MatrixXd noise = gaussian_matrix(valid, spec.D, spec.noise_sigma, rng);
    for (int n = 0; n < valid; ++n) {
      const int c = frame_concept[static_cast<std::size_t>(n)];
      spatial.row(n) = (c < 0 ? MatrixXd(background) : MatrixXd(corpus.prototypes.row(c))) + noise.row(n);
    }
    MatrixXd encoded = MatrixXd::Zero(spec.F, spec.D);
    for (int n = 0; n < valid; ++n) {
      const int lo = std::max(0, n - spec.smoothing);
      const int hi = std::min(valid - 1, n + spec.smoothing);
      encoded.row(n) = spatial.middleRows(lo, hi - lo + 1).colwise().mean();
    }

    FrameFeatures f;
    f.video_id = vid;
    f.valid_len = valid;
    f.spatial = spatial.cast<float>();
    f.encoded = encoded.cast<float>();
    f.validate();
    corpus.features.push_back(std::move(f));
    corpus.annotations.push_back(std::move(ann));
    corpus.truth.push_back(std::move(truth));
  }
  return corpus;
}

SynthSpec parse_synth_spec(const std::string& json_text) {
  SynthSpec spec;
  try {
    const json j = json::parse(json_text);
    if (!j.is_object()) throw config_error("synth spec must be a JSON object");
    auto range = [](const json& v) {
      if (!v.is_array() || v.size() != 2) throw config_error("synth: ranges must be [lo, hi]");
      return std::pair<int, int>{v[0].get<int>(), v[1].get<int>()};
    };
    for (const auto& [key, value] : j.items()) {
      if (key == "n_videos") spec.n_videos = value.get<int>();
      else if (key == "F") spec.F = value.get<int>();
      else if (key == "D") spec.D = value.get<int>();
      else if (key == "events_per_video") spec.events_per_video = range(value);
      else if (key == "event_len") spec.event_len = range(value);
      else if (key == "valid_len") spec.valid_len = range(value);
      else if (key == "noise_sigma") spec.noise_sigma = value.get<double>();
      else if (key == "n_caption_concepts") spec.n_caption_concepts = value.get<int>();
      else if (key == "smoothing") spec.smoothing = value.get<int>();
      else if (key == "seed") spec.seed = value.get<std::uint64_t>();
      else if (key == "id_prefix") spec.id_prefix = value.get<std::string>();
      else throw config_error("unknown synth spec key: " + key);
    }
  } catch (const json::exception& e) {
    throw config_error(std::string("bad synth spec: ") + e.what());
  }
  spec.validate();
  return spec;
}

void write_corpus(const SynthCorpus& corpus, const fs::path& dir) {
  fs::create_directories(dir / "features");
  for (const auto& f : corpus.features) save_features(f, dir / "features" / (f.video_id + ".sfeat"));
  save_annotations(corpus.annotations, dir / "annotations.jsonl");
  corpus.datastore.save(dir / "datastore.sds");
  std::string truth;
  for (const auto& t : corpus.truth) {
    json events = json::array();
    for (const auto& e : t.events) events.push_back({e.event.start, e.event.end, concept_id(e.concept_id)});
    truth += json{{"video_id", t.video_id}, {"events", events}}.dump() + "\n";
  }
  write_file(dir / "truth.jsonl", truth);
}

}  // namespace starc
