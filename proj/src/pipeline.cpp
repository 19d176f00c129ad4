#include "starc/pipeline.hpp"

#include <json.hpp>
#include <openssl/evp.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

namespace starc {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

template <typename Record>
std::vector<Record> load_jsonl(const fs::path& path, Record (*parse)(const std::string&)) {
  std::istringstream in(read_file(path));
  std::vector<Record> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(parse(line));
  }
  return out;
}

template <typename Fn>
auto parse_guard(const char* what, Fn&& fn) {
  try {
    return fn();
  } catch (const json::exception& e) {
    throw data_error(std::string("malformed ") + what + " record: " + e.what());
  }
}

}  // namespace

Segmenter parse_segmenter(const std::string& name) {
  if (name == "ot" || name == "none") return Segmenter::Ot;
  if (name == "uniform") return Segmenter::Uniform;
  if (name == "kmeans") return Segmenter::KMeans;
  throw config_error("unknown segmenter: " + name);
}

std::string segmenter_name(Segmenter s) {
  switch (s) {
    case Segmenter::Ot: return "ot";
    case Segmenter::Uniform: return "uniform";
    case Segmenter::KMeans: return "kmeans";
  }
  return "?";
}

SwsaConfig swsa_config(const PipelineConfig& cfg) { return {cfg.windows, 1, cfg.ln_epsilon}; }

SolverOptions solver_options(const PipelineConfig& cfg) {
  return {cfg.max_outer_iter, cfg.max_inner_iter, cfg.plan_tol};
}

FrameFeatures refine_stage(const FrameFeatures& f, const PipelineConfig& cfg) {
  f.validate();
  FrameFeatures out = f;
  out.encoded = swsa_refine(f.encoded.cast<double>().eval(), swsa_config(cfg), f.valid_len).cast<float>();
  if (!out.encoded.allFinite()) throw numerical_error(f.video_id + ": refined features overflow");
  return out;
}

SaliencyRecord saliency_stage(const FrameFeatures& refined, const SaliencyHead& head) {
  if (refined.valid_len < 1) throw data_error(refined.video_id + ": no valid frames");
  const auto fwd = saliency_forward(head, refined.encoded.cast<double>().eval(), refined.mask());
  if (!fwd.scores.allFinite()) throw numerical_error(refined.video_id + ": non-finite saliency score");
  return {refined.video_id, std::vector<double>(fwd.scores.data(), fwd.scores.data() + fwd.scores.size()),
          refined.valid_len};
}

VectorXd valid_prior(const SaliencyRecord& sal) {
  const VectorXd scores = Eigen::Map<const VectorXd>(sal.scores.data(), static_cast<Index>(sal.scores.size()));
  const Mask mask = prefix_mask(scores.size(), sal.valid_len);
  return saliency_prior<double>(scores, mask).first.head(sal.valid_len);
}

MatrixXd valid_spatial(const FrameFeatures& f) { return f.spatial.topRows(f.valid_len).cast<double>(); }

SegmentRecord segment_with_prior(const FrameFeatures& f, const VectorXd& prior, const PipelineConfig& cfg,
                                 Segmenter segmenter, std::optional<TransportPlan>* plan_out) {
  const MatrixXd xs = valid_spatial(f);
  const Index frames = xs.rows();
  if (frames < 1) throw data_error(f.video_id + ": no valid frames");
  if (prior.size() != frames) throw data_error(f.video_id + ": prior length does not match valid frames");
  SegmentRecord rec{f.video_id, {}};
  switch (segmenter) {
    case Segmenter::Ot: {
      const auto anchors = farthest_point_anchors(xs, cfg.K, cfg.seed, f.video_id);
      const auto prob = make_ot_problem(xs, anchors, prior, cfg.mu, cfg.alpha, cfg.gamma, cfg.epsilon);
      auto plan = solve_fugw(prob, solver_options(cfg));
      rec.segments = select_topk(score_segments(decode_segments(plan.T), plan.T), cfg.top_k, cfg.min_segment_len);
      if (plan_out) *plan_out = std::move(plan);
      break;
    }
    case Segmenter::Uniform:
      rec.segments = baseline_uniform(frames, static_cast<int>(std::min<Index>(cfg.top_k, frames)));
      break;
    case Segmenter::KMeans: {
      const int k = static_cast<int>(std::min<Index>(cfg.K, frames));
      rec.segments = select_topk(baseline_kmeans(xs, k, substream_seed(cfg.seed, "kmeans", f.video_id)), cfg.top_k,
                                 cfg.min_segment_len);
      break;
    }
  }
  return rec;
}

SegmentRecord segment_stage(const FrameFeatures& f, const SaliencyRecord& sal, const PipelineConfig& cfg,
                            Segmenter segmenter, std::optional<TransportPlan>* plan_out) {
  if (sal.video_id != f.video_id) throw data_error("saliency record does not match video " + f.video_id);
  if (sal.valid_len != f.valid_len) throw data_error(f.video_id + ": saliency valid length mismatch");
  return segment_with_prior(f, valid_prior(sal), cfg, segmenter, plan_out);
}

RetrievalRecord retrieve_stage(const FrameFeatures& f, const SaliencyRecord& sal, const SegmentRecord& segs,
                               const Datastore& store, const PipelineConfig& cfg) {
  if (sal.video_id != f.video_id || segs.video_id != f.video_id)
    throw data_error("retrieval inputs do not match video " + f.video_id);
  if (store.dim() != f.dim()) throw data_error(f.video_id + ": datastore dimension differs from features");
  return {f.video_id, retrieval_vectors(segs.segments, valid_spatial(f), valid_prior(sal), store, cfg.top_p)};
}

DecoderInput assemble_stage(const FrameFeatures& refined, const SaliencyRecord& sal, const RetrievalRecord& ret,
                            const SaliencyPrompt& prompt) {
  if (sal.video_id != refined.video_id || ret.video_id != refined.video_id)
    throw data_error("assembly inputs do not match video " + refined.video_id);
  const VectorXd scores = Eigen::Map<const VectorXd>(sal.scores.data(), static_cast<Index>(sal.scores.size()));
  const MatrixXd prompts = project_saliency(scores, prompt);
  const MatrixXd text(0, refined.dim());
  return assemble_input(refined.encoded.cast<double>(), prompts, ret.result.vectors, text);
}

VideoReport evaluate_video(const SegmentRecord& segs, const EventAnnotation& ann) {
  std::vector<Interval> pred;
  for (const auto& s : segs.segments.selected_segments()) pred.push_back({s.start, s.end});
  VideoReport r{segs.video_id, localization_prf(pred, ann.events), {}};
  if (!ann.events.empty()) r.quality = segment_quality(pred, ann.events);
  return r;
}

std::string format_saliency_line(const SaliencyRecord& r) {
  return json{{"video_id", r.video_id}, {"valid_len", r.valid_len}, {"scores", r.scores}}.dump();
}

SaliencyRecord parse_saliency_line(const std::string& line) {
  return parse_guard("saliency", [&] {
    const json j = json::parse(line);
    SaliencyRecord r{j.at("video_id").get<std::string>(), j.at("scores").get<std::vector<double>>(),
                     j.at("valid_len").get<Index>()};
    if (r.valid_len < 1 || r.valid_len > static_cast<Index>(r.scores.size()))
      throw data_error(r.video_id + ": bad saliency valid_len");
    return r;
  });
}

std::string format_segment_line(const SegmentRecord& r) {
  json segs = json::array();
  for (const auto& s : r.segments.segments)
    segs.push_back({{"anchor", s.anchor_id}, {"start", s.start}, {"end", s.end}, {"score", s.score}});
  return json{{"video_id", r.video_id}, {"segments", segs}, {"selected", r.segments.selected}}.dump();
}

SegmentRecord parse_segment_line(const std::string& line) {
  return parse_guard("segment", [&] {
    const json j = json::parse(line);
    SegmentRecord r;
    r.video_id = j.at("video_id").get<std::string>();
    for (const auto& s : j.at("segments")) {
      Segment seg;
      seg.anchor_id = s.at("anchor").get<int>();
      seg.start = s.at("start").get<Index>();
      seg.end = s.at("end").get<Index>();
      seg.score = s.at("score").get<double>();
      if (seg.start < 0 || seg.end <= seg.start) throw data_error(r.video_id + ": invalid segment");
      r.segments.segments.push_back(seg);
    }
    r.segments.selected = j.at("selected").get<std::vector<std::size_t>>();
    for (auto i : r.segments.selected)
      if (i >= r.segments.segments.size()) throw data_error(r.video_id + ": selected index out of range");
    return r;
  });
}

std::string format_retrieval_line(const RetrievalRecord& r) {
  json segs = json::array();
  for (const auto& s : r.result.per_segment) {
    json hits = json::array();
    for (const auto& h : s.hits) hits.push_back({{"id", h.entry_id}, {"similarity", h.similarity}});
    segs.push_back({{"start", s.segment.start}, {"end", s.segment.end}, {"hits", hits}});
  }
  json rows = json::array();
  for (Index i = 0; i < r.result.vectors.rows(); ++i) {
    std::vector<double> row(static_cast<std::size_t>(r.result.vectors.cols()));
    for (Index j = 0; j < r.result.vectors.cols(); ++j) row[static_cast<std::size_t>(j)] = r.result.vectors(i, j);
    rows.push_back(row);
  }
  return json{{"video_id", r.video_id}, {"dim", r.result.vectors.cols()}, {"segments", segs}, {"R", rows}}.dump();
}

RetrievalRecord parse_retrieval_line(const std::string& line) {
  return parse_guard("retrieval", [&] {
    const json j = json::parse(line);
    RetrievalRecord r;
    r.video_id = j.at("video_id").get<std::string>();
    for (const auto& s : j.at("segments")) {
      SegmentRetrieval sr;
      sr.segment.start = s.at("start").get<Index>();
      sr.segment.end = s.at("end").get<Index>();
      for (const auto& h : s.at("hits")) sr.hits.push_back({h.at("id").get<std::string>(), h.at("similarity").get<double>()});
      r.result.per_segment.push_back(std::move(sr));
    }
    const Index dim = j.at("dim").get<Index>();
    const auto& rows = j.at("R");
    r.result.vectors.resize(static_cast<Index>(rows.size()), dim);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto row = rows[i].get<std::vector<double>>();
      if (static_cast<Index>(row.size()) != dim) throw data_error(r.video_id + ": retrieval row width mismatch");
      for (Index c = 0; c < dim; ++c) r.result.vectors(static_cast<Index>(i), c) = row[static_cast<std::size_t>(c)];
    }
    return r;
  });
}

std::vector<SaliencyRecord> load_saliency(const fs::path& path) { return load_jsonl(path, &parse_saliency_line); }
std::vector<SegmentRecord> load_segments(const fs::path& path) { return load_jsonl(path, &parse_segment_line); }
std::vector<RetrievalRecord> load_retrieval(const fs::path& path) { return load_jsonl(path, &parse_retrieval_line); }

std::vector<std::optional<Error>> parallel_for(std::size_t n, int jobs, bool fail_fast,
                                               const std::function<void(std::size_t)>& work) {
  std::vector<std::optional<Error>> errors(n);
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  auto worker = [&] {
    for (std::size_t i = next++; i < n && !stop; i = next++) {
      try {
        work(i);
      } catch (const Error& e) {
        errors[i] = e;
      } catch (const std::exception& e) {
        errors[i] = data_error(e.what());
      }
      if (errors[i] && fail_fast) stop = true;
    }
  };
  const int threads = std::max(1, std::min<int>(jobs, static_cast<int>(n)));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (fail_fast)
    for (auto& e : errors)
      if (e) throw *e;
  return errors;
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw data_error("sha256 failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xf]);
  }
  return out;
}

PipelineRun run_pipeline(const PipelineConfig& cfg, const fs::path& features_dir, const fs::path& annotations,
                         const fs::path& datastore, const fs::path& head_path, const fs::path& out_dir,
                         const RunOptions& opts) {
  cfg.validate();
  const auto features = load_features_dir(features_dir);
  std::map<std::string, EventAnnotation> anns;
  for (auto& a : load_annotations(annotations)) anns[a.video_id] = std::move(a);
  const Datastore store = Datastore::load(datastore);
  const SaliencyHead head = load_head(head_path);
  const SaliencyPrompt prompt = init_saliency_prompt(head.dim(), cfg.seed);

  struct VideoOutputs {
    FrameFeatures refined;
    SaliencyRecord saliency;
    SegmentRecord segments;
    RetrievalRecord retrieval;
    DecoderInput decoder_input;
    std::optional<TransportPlan> plan;
    VideoReport report;
  };
  std::vector<std::optional<VideoOutputs>> results(features.size());

  const auto errors = parallel_for(features.size(), opts.jobs, opts.fail_fast, [&](std::size_t i) {
    const auto& f = features[i];
    if (f.dim() != head.dim()) throw data_error("feature width does not match the head checkpoint");
    VideoOutputs o;
    o.refined = refine_stage(f, cfg);
    o.saliency = saliency_stage(o.refined, head);
    o.segments = segment_stage(o.refined, o.saliency, cfg, opts.segmenter, &o.plan);
    o.retrieval = retrieve_stage(o.refined, o.saliency, o.segments, store, cfg);
    o.decoder_input = assemble_stage(o.refined, o.saliency, o.retrieval, prompt);
    const auto it = anns.find(f.video_id);
    o.report = evaluate_video(o.segments, it == anns.end() ? EventAnnotation{f.video_id, f.valid_len, {}} : it->second);
    results[i] = std::move(o);
  });

  PipelineRun run;
  std::string saliency_lines, segment_lines, retrieval_lines;
  std::vector<VideoReport> reports;
  fs::create_directories(out_dir);
  for (std::size_t i = 0; i < features.size(); ++i) {
    const auto& id = features[i].video_id;
    if (errors[i]) {
      spdlog::error("{}: {}", id, errors[i]->what());
      if (run.failed.empty()) run.failure_kind = errors[i]->kind();
      run.failed.push_back(id);
      continue;
    }
    const auto& o = *results[i];
    run.processed.push_back(id);
    save_features(o.refined, out_dir / "refined" / (id + ".sfeat"));
    write_file(out_dir / "stin" / (id + ".stin"), encode_decoder_input(o.decoder_input));
    if (opts.dump_plans && o.plan) write_file(out_dir / "plans" / (id + ".json"), plan_to_json(*o.plan) + "\n");
    saliency_lines += format_saliency_line(o.saliency) + "\n";
    segment_lines += format_segment_line(o.segments) + "\n";
    retrieval_lines += format_retrieval_line(o.retrieval) + "\n";
    reports.push_back(o.report);
  }
  write_file(out_dir / "saliency.jsonl", saliency_lines);
  write_file(out_dir / "segments.jsonl", segment_lines);
  write_file(out_dir / "retrieval.jsonl", retrieval_lines);
  run.report = aggregate_reports(std::move(reports));
  write_file(out_dir / "report.json", report_to_json(run.report));
  write_file(out_dir / "report.txt", report_to_table(run.report));

  std::vector<std::string> files;
  for (const auto& entry : fs::recursive_directory_iterator(out_dir))
    if (entry.is_regular_file() && entry.path().filename() != "manifest.json")
      files.push_back(fs::relative(entry.path(), out_dir).generic_string());
  std::sort(files.begin(), files.end());
  json listing = json::array();
  for (const auto& rel : files) listing.push_back({{"path", rel}, {"sha256", sha256_hex(read_file(out_dir / rel))}});
  const json manifest = {{"tool", "starc"},
                         {"version", kVersion},
                         {"seed", cfg.seed},
                         {"segmenter", segmenter_name(opts.segmenter)},
                         {"config", json::parse(config_to_json(cfg))},
                         {"videos", run.processed},
                         {"failed", run.failed},
                         {"files", listing}};
  write_file(out_dir / "manifest.json", manifest.dump(2) + "\n");
  return run;
}

std::vector<TrainingExample> make_training_examples(const std::vector<FrameFeatures>& features,
                                                    const std::vector<EventAnnotation>& annotations,
                                                    const PipelineConfig& cfg) {
  std::map<std::string, const EventAnnotation*> by_id;
  for (const auto& a : annotations) by_id[a.video_id] = &a;
  std::vector<TrainingExample> out;
  for (const auto& f : features) {
    const auto it = by_id.find(f.video_id);
    if (it == by_id.end()) {
      spdlog::warn("{}: no annotation, skipped for training", f.video_id);
      continue;
    }
    const auto refined = refine_stage(f, cfg);
    const auto labels = derive_highlight_labels(*it->second, f.frames(), f.valid_len);
    out.push_back({f.video_id, refined.encoded.cast<double>(), labels.mask, labels.labels});
  }
  return out;
}

}  // namespace starc
