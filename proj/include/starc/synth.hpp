#pragma once

// Seeded synthetic corpora with exact event structure and a concept-labelled
// caption datastore.

#include "starc/features.hpp"
#include "starc/retrieval.hpp"

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace starc {

struct SynthSpec {
  int n_videos = 10;
  int F = 100;
  int D = 64;
  std::pair<int, int> events_per_video{6, 9};
  std::pair<int, int> event_len{6, 12};
  std::pair<int, int> valid_len{100, 100};
  double noise_sigma = 0.1;
  int n_caption_concepts = 24;
  int smoothing = 1;  // half-width of the moving average producing `encoded`
  std::uint64_t seed = 0;
  std::string id_prefix = "vid";

  void validate() const;
};

struct TruthEvent {
  Event event;
  int concept_id = 0;
};

struct TruthRecord {
  std::string video_id;
  std::vector<TruthEvent> events;
};

struct SynthCorpus {
  std::vector<FrameFeatures> features;
  std::vector<EventAnnotation> annotations;
  Datastore datastore;
  std::vector<TruthRecord> truth;
  MatrixXd prototypes;  // concepts first, background last; orthonormal rows
};

/// Event frames are their concept prototype plus N(0, sigma^2) noise,
/// background frames the shared background prototype plus noise. `encoded`
/// is a moving average of `spatial` over the valid frames.
SynthCorpus generate_corpus(const SynthSpec& spec);

SynthSpec parse_synth_spec(const std::string& json_text);

/// features/<id>.sfeat, annotations.jsonl, datastore.sds, truth.jsonl.
void write_corpus(const SynthCorpus& corpus, const std::filesystem::path& dir);

std::string concept_id(int c);

}  // namespace starc
