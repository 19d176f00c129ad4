#pragma once

// Per-video inference stages and the file formats that connect them. Every
// stage consumes and produces exactly what its files hold, so a chain of
// standalone stage runs reproduces a monolithic run byte for byte.

#include "starc/features.hpp"
#include "starc/metrics.hpp"
#include "starc/ot.hpp"
#include "starc/prompt.hpp"
#include "starc/retrieval.hpp"
#include "starc/saliency.hpp"
#include "starc/segments.hpp"
#include "starc/swsa.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace starc {

enum class Segmenter { Ot, Uniform, KMeans };

Segmenter parse_segmenter(const std::string& name);
std::string segmenter_name(Segmenter s);

struct SaliencyRecord {
  std::string video_id;
  std::vector<double> scores;  // P_s over all F frames
  Index valid_len = 0;
};

struct SegmentRecord {
  std::string video_id;
  SegmentSet segments;
};

struct RetrievalRecord {
  std::string video_id;
  RetrievalResult result;
};

SwsaConfig swsa_config(const PipelineConfig& cfg);
SolverOptions solver_options(const PipelineConfig& cfg);

/// X' written back into `encoded` at file precision.
FrameFeatures refine_stage(const FrameFeatures& f, const PipelineConfig& cfg);

SaliencyRecord saliency_stage(const FrameFeatures& refined, const SaliencyHead& head);

/// Raw sigmoid prior over the valid frames.
VectorXd valid_prior(const SaliencyRecord& sal);

/// Valid-frame spatial features in double precision.
MatrixXd valid_spatial(const FrameFeatures& f);

/// Solves the transport problem for one video and decodes, scores and
/// selects segments; the plan is returned alongside when produced.
SegmentRecord segment_stage(const FrameFeatures& f, const SaliencyRecord& sal, const PipelineConfig& cfg,
                            Segmenter segmenter, std::optional<TransportPlan>* plan_out = nullptr);

/// Same as segment_stage with an explicit prior (valid frames only).
SegmentRecord segment_with_prior(const FrameFeatures& f, const VectorXd& prior, const PipelineConfig& cfg,
                                 Segmenter segmenter, std::optional<TransportPlan>* plan_out = nullptr);

RetrievalRecord retrieve_stage(const FrameFeatures& f, const SaliencyRecord& sal, const SegmentRecord& segs,
                               const Datastore& store, const PipelineConfig& cfg);

DecoderInput assemble_stage(const FrameFeatures& refined, const SaliencyRecord& sal, const RetrievalRecord& ret,
                            const SaliencyPrompt& prompt);

VideoReport evaluate_video(const SegmentRecord& segs, const EventAnnotation& ann);

// Stage file formats (JSON Lines, one record per video, f64 values written
// with round-trip precision).
std::string format_saliency_line(const SaliencyRecord& r);
SaliencyRecord parse_saliency_line(const std::string& line);
std::string format_segment_line(const SegmentRecord& r);
SegmentRecord parse_segment_line(const std::string& line);
std::string format_retrieval_line(const RetrievalRecord& r);
RetrievalRecord parse_retrieval_line(const std::string& line);

std::vector<SaliencyRecord> load_saliency(const std::filesystem::path& path);
std::vector<SegmentRecord> load_segments(const std::filesystem::path& path);
std::vector<RetrievalRecord> load_retrieval(const std::filesystem::path& path);

struct RunOptions {
  int jobs = 1;
  bool fail_fast = false;
  bool dump_plans = false;
  Segmenter segmenter = Segmenter::Ot;
};

struct PipelineRun {
  std::vector<std::string> processed;
  std::vector<std::string> failed;
  LocalizationReport report;
  ErrorKind failure_kind = ErrorKind::Data;
};

/// Runs `work(i)` for i in [0, n) on up to `jobs` threads. Exceptions are
/// captured per index; with fail_fast the first one is rethrown.
std::vector<std::optional<Error>> parallel_for(std::size_t n, int jobs, bool fail_fast,
                                               const std::function<void(std::size_t)>& work);

/// refine -> saliency -> segmentation -> retrieval -> assembly -> evaluation,
/// writing every artifact and a manifest with content hashes under out_dir.
PipelineRun run_pipeline(const PipelineConfig& cfg, const std::filesystem::path& features_dir,
                         const std::filesystem::path& annotations, const std::filesystem::path& datastore,
                         const std::filesystem::path& head_path, const std::filesystem::path& out_dir,
                         const RunOptions& opts);

std::string sha256_hex(std::string_view bytes);

/// Training examples from raw features: refine, derive labels.
std::vector<TrainingExample> make_training_examples(const std::vector<FrameFeatures>& features,
                                                    const std::vector<EventAnnotation>& annotations,
                                                    const PipelineConfig& cfg);

}  // namespace starc
