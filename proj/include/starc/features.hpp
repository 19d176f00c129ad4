#pragma once

#include "starc/common.hpp"

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace starc {

// Per-video frame features. Rows at index >= valid_len are zero padding.
// Stored in single precision, which is the on-disk precision; numeric stages
// cast to double.
struct FrameFeatures {
  std::string video_id;
  MatrixXf spatial;  // F x D, frame embeddings before temporal encoding
  MatrixXf encoded;  // F x D, temporally encoded embeddings
  Index valid_len = 0;

  Index frames() const { return spatial.rows(); }
  Index dim() const { return spatial.cols(); }
  Mask mask() const { return prefix_mask(frames(), valid_len); }

  // Throws data_error when an invariant does not hold.
  void validate() const;

  bool operator==(const FrameFeatures&) const = default;
};

// Half-open [start, end) in frame units (1 frame per second).
struct Event {
  Index start = 0;
  Index end = 0;
  Index length() const { return end - start; }
  bool operator==(const Event&) const = default;
};

struct EventAnnotation {
  std::string video_id;
  Index valid_len = 0;
  std::vector<Event> events;  // sorted by start, overlaps allowed
};

struct HighlightLabels {
  Mask labels;  // H
  Mask mask;    // M
};

struct PipelineConfig {
  double tau = 0.5;
  double lambda = 6.0;
  double mu = 0.1;
  double gamma = 0.3;
  double rho = 0.0;
  double alpha = 0.5;
  double epsilon = 0.1;
  int K = 8;
  int top_k = 5;
  int top_p = 10;
  std::vector<int> windows{8, 32, 64};
  int F_max = 100;
  std::uint64_t seed = 0;

  // Knobs outside the core hyperparameter set.
  int epochs = 20;
  double learning_rate = 1e-3;
  std::string lr_schedule = "constant";  // or "warmup_cosine"
  int max_outer_iter = 200;
  int max_inner_iter = 100;
  double plan_tol = 1e-7;
  double ln_epsilon = 1e-5;
  int min_segment_len = 1;

  void validate() const;
};

void save_features(const FrameFeatures& f, const std::filesystem::path& path);
FrameFeatures load_features(const std::filesystem::path& path);

// In-memory codec behind the .sfeat file format.
std::string encode_features(const FrameFeatures& f);
FrameFeatures decode_features(std::string_view bytes, std::string video_id);

// Loads every *.sfeat in a directory, sorted by video id (file stem).
std::vector<FrameFeatures> load_features_dir(const std::filesystem::path& dir);

HighlightLabels derive_highlight_labels(const EventAnnotation& ann, Index frames, Index valid_len);

// Warnings for annotation quirks that are legal but suspicious (overlaps).
std::vector<std::string> lint_annotation(const EventAnnotation& ann);

std::vector<EventAnnotation> load_annotations(const std::filesystem::path& path);
void save_annotations(const std::vector<EventAnnotation>& anns, const std::filesystem::path& path);
EventAnnotation parse_annotation_line(const std::string& line);
std::string format_annotation_line(const EventAnnotation& ann);

PipelineConfig parse_config(const std::string& json_text);
PipelineConfig load_config(const std::filesystem::path& path);
std::string config_to_json(const PipelineConfig& cfg);

// Whole-file helpers shared by every on-disk format.
std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace starc
