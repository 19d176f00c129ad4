#include "starc/pipeline.hpp"
#include "starc/synth.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <chrono>
#include <map>
#include <optional>

namespace fs = std::filesystem;
using namespace starc;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  int jobs = 1;
  std::string log_level = "info";
  bool csv = false;
};

PipelineConfig resolve_config(const Globals& g) {
  PipelineConfig cfg = g.config.empty() ? PipelineConfig{} : load_config(g.config);
  if (g.seed) cfg.seed = *g.seed;
  cfg.validate();
  return cfg;
}

class Timer {
 public:
  explicit Timer(std::string what) : what_(std::move(what)), start_(std::chrono::steady_clock::now()) {}
  ~Timer() {
    const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - start_;
    spdlog::info("{} took {:.3f}s", what_, dt.count());
  }

 private:
  std::string what_;
  std::chrono::steady_clock::time_point start_;
};

template <typename Record>
std::map<std::string, Record> by_video(std::vector<Record> records, const char* what) {
  std::map<std::string, Record> out;
  for (auto& r : records) {
    const std::string id = r.video_id;
    if (!out.emplace(id, std::move(r)).second) throw data_error(std::string("duplicate ") + what + " record " + id);
  }
  return out;
}

template <typename Record>
const Record& lookup(const std::map<std::string, Record>& m, const std::string& id, const char* what) {
  const auto it = m.find(id);
  if (it == m.end()) throw data_error(id + ": no " + what + " record");
  return it->second;
}

// Runs one stage over every video; failed videos are logged and dropped,
// exactly as the monolithic pipeline does.
template <typename Out>
std::vector<std::optional<Out>> per_video(const std::vector<FrameFeatures>& feats, const Globals& g,
                                          bool fail_fast, const std::function<Out(const FrameFeatures&)>& fn) {
  std::vector<std::optional<Out>> out(feats.size());
  const auto errors = parallel_for(feats.size(), g.jobs, fail_fast, [&](std::size_t i) { out[i] = fn(feats[i]); });
  for (std::size_t i = 0; i < feats.size(); ++i)
    if (errors[i]) spdlog::error("{}: {}", feats[i].video_id, errors[i]->what());
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("starc"));
  CLI::App app{"starc: saliency-guided temporal segmentation, retrieval and prompt assembly"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "pipeline config (JSON)")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "override the config seed");
  app.add_option("--jobs", g.jobs, "videos processed in parallel")->check(CLI::PositiveNumber);
  app.add_option("--log-level", g.log_level, "trace|debug|info|warn|error|off");
  app.add_flag("--csv", g.csv, "also write tables as CSV");

  std::string features, annotations, datastore, head, out, saliency, segments, retrieval, baseline = "none";
  std::string spec_path, corrupt, init_head, dump_plan, pred, gt;
  double sigma = 0;
  bool fail_fast = false, dump_plans = false;

  auto* synth = app.add_subcommand("synth", "generate a synthetic corpus");
  synth->add_option("--spec", spec_path, "generator spec (JSON)")->check(CLI::ExistingFile);
  synth->add_option("--out,--out-dir", out)->required();

  auto* refine = app.add_subcommand("refine", "sliding-window self-attention refinement");
  refine->add_option("--features,--features-dir", features, "directory of .sfeat files")->required();
  refine->add_option("--out,--out-dir", out, "output directory")->required();

  auto* train = app.add_subcommand("train-saliency", "train the saliency head");
  train->add_option("--features,--features-dir", features, "raw features directory")->required();
  train->add_option("--annotations", annotations)->required();
  train->add_option("--out,--out-head", out, "head checkpoint")->required();
  train->add_option("--init", init_head, "resume from a checkpoint");
  std::optional<int> epochs;
  std::optional<double> lr;
  train->add_option("--epochs", epochs, "override the config epochs");
  train->add_option("--lr", lr, "override the config learning rate");

  auto* score = app.add_subcommand("score-saliency", "per-frame saliency scores");
  score->add_option("--features", features, "refined features directory")->required();
  score->add_option("--head", head)->required();
  score->add_option("--out", out, "saliency.jsonl")->required();

  auto* segment = app.add_subcommand("segment", "OT segmentation and top-k selection");
  segment->add_option("--features", features, "refined features directory")->required();
  segment->add_option("--saliency", saliency)->required();
  segment->add_option("--out", out, "segments.jsonl")->required();
  segment->add_option("--baseline", baseline, "none|uniform|kmeans");
  segment->add_option("--dump-plan", dump_plan, "directory for per-video transport plans");

  auto* retrieve = app.add_subcommand("retrieve", "datastore retrieval per selected segment");
  retrieve->add_option("--features", features, "refined features directory")->required();
  retrieve->add_option("--saliency", saliency)->required();
  retrieve->add_option("--segments", segments)->required();
  retrieve->add_option("--datastore", datastore)->required();
  retrieve->add_option("--out", out, "retrieval.jsonl")->required();

  auto* assemble = app.add_subcommand("assemble", "build decoder input sequences");
  assemble->add_option("--features", features, "refined features directory")->required();
  assemble->add_option("--saliency", saliency)->required();
  assemble->add_option("--retrieval", retrieval)->required();
  assemble->add_option("--out", out, "directory for .stin files")->required();
  assemble->add_option("--corrupt", corrupt, "zero|gaussian");
  assemble->add_option("--sigma", sigma, "noise scale for --corrupt gaussian");

  auto* eval = app.add_subcommand("eval", "localization metrics");
  eval->add_option("--pred", pred, "segments.jsonl")->required();
  eval->add_option("--gt", gt, "annotations.jsonl")->required();
  eval->add_option("--out", out, "report.json")->required();

  auto* pipeline = app.add_subcommand("pipeline", "full inference pipeline");
  pipeline->add_option("--features,--features-dir", features, "raw features directory")->required();
  pipeline->add_option("--annotations", annotations)->required();
  pipeline->add_option("--datastore", datastore)->required();
  pipeline->add_option("--head", head)->required();
  pipeline->add_option("--out,--out-dir", out, "output directory")->required();
  pipeline->add_option("--baseline", baseline, "none|uniform|kmeans");
  pipeline->add_flag("--dump-plan", dump_plans, "write transport plans under plans/");
  pipeline->add_flag("--fail-fast", fail_fast, "abort on the first failing video");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    const auto level = spdlog::level::from_str(g.log_level);
    if (level == spdlog::level::off && g.log_level != "off") throw config_error("unknown log level " + g.log_level);
    spdlog::set_level(level);

    if (*synth) {
      Timer t("synth");
      const SynthSpec spec = spec_path.empty() ? SynthSpec{} : parse_synth_spec(read_file(spec_path));
      write_corpus(generate_corpus(spec), out);
      return 0;
    }

    PipelineConfig cfg = resolve_config(g);
    if (epochs) cfg.epochs = *epochs;
    if (lr) cfg.learning_rate = *lr;
    cfg.validate();

    if (*refine) {
      Timer t("refine");
      const auto feats = load_features_dir(features);
      const auto refined = per_video<FrameFeatures>(feats, g, false, [&](const FrameFeatures& f) {
        return refine_stage(f, cfg);
      });
      fs::create_directories(out);
      for (const auto& r : refined)
        if (r) save_features(*r, fs::path(out) / (r->video_id + ".sfeat"));
      return 0;
    }

    if (*train) {
      Timer t("train-saliency");
      const auto feats = load_features_dir(features);
      const auto examples = make_training_examples(feats, load_annotations(annotations), cfg);
      if (examples.empty()) throw data_error("no training examples");
      const Index dim = examples.front().features.cols();
      SaliencyHead start = init_head.empty() ? init_saliency_head(dim, cfg.tau, cfg.seed) : load_head(init_head);
      if (start.dim() != dim) throw data_error("initial head dimension does not match the features");
      start.tau = cfg.tau;
      const auto result = train_saliency(examples, start, {cfg.epochs, cfg.lambda, cfg.lr_schedule, cfg.seed},
                                         make_train_state(start, cfg.learning_rate));
      save_head(result.head, out);
      if (result.diverged) throw numerical_error("training diverged; last finite head saved");
      return 0;
    }

    if (*score) {
      Timer t("score-saliency");
      const auto feats = load_features_dir(features);
      const SaliencyHead h = load_head(head);
      if (!feats.empty() && h.dim() != feats.front().dim())
        throw data_error("head checkpoint dimension does not match the features");
      const auto recs = per_video<SaliencyRecord>(feats, g, false, [&](const FrameFeatures& f) {
        return saliency_stage(f, h);
      });
      std::string text;
      for (const auto& r : recs)
        if (r) text += format_saliency_line(*r) + "\n";
      write_file(out, text);
      return 0;
    }

    if (*segment) {
      Timer t("segment");
      const Segmenter which = parse_segmenter(baseline);
      const auto feats = load_features_dir(features);
      const auto sal = by_video(load_saliency(saliency), "saliency");
      std::vector<std::optional<TransportPlan>> plans(feats.size());
      std::vector<std::optional<SegmentRecord>> recs(feats.size());
      const auto errors = parallel_for(feats.size(), g.jobs, false, [&](std::size_t i) {
        recs[i] = segment_stage(feats[i], lookup(sal, feats[i].video_id, "saliency"), cfg, which, &plans[i]);
      });
      std::string text;
      for (std::size_t i = 0; i < feats.size(); ++i) {
        if (errors[i]) {
          spdlog::error("{}: {}", feats[i].video_id, errors[i]->what());
          continue;
        }
        text += format_segment_line(*recs[i]) + "\n";
        if (!dump_plan.empty() && plans[i])
          write_file(fs::path(dump_plan) / (feats[i].video_id + ".json"), plan_to_json(*plans[i]) + "\n");
      }
      write_file(out, text);
      return 0;
    }

    if (*retrieve) {
      Timer t("retrieve");
      const auto feats = load_features_dir(features);
      const auto sal = by_video(load_saliency(saliency), "saliency");
      const auto segs = by_video(load_segments(segments), "segment");
      const Datastore store = Datastore::load(datastore);
      const auto recs = per_video<RetrievalRecord>(feats, g, false, [&](const FrameFeatures& f) {
        return retrieve_stage(f, lookup(sal, f.video_id, "saliency"), lookup(segs, f.video_id, "segment"), store, cfg);
      });
      std::string text;
      for (const auto& r : recs)
        if (r) text += format_retrieval_line(*r) + "\n";
      write_file(out, text);
      return 0;
    }

    if (*assemble) {
      Timer t("assemble");
      const auto feats = load_features_dir(features);
      const auto sal = by_video(load_saliency(saliency), "saliency");
      const auto ret = by_video(load_retrieval(retrieval), "retrieval");
      std::optional<PromptCorruption> how;
      if (corrupt == "zero") how = PromptCorruption{CorruptionMode::Zero, 0};
      else if (corrupt == "gaussian") how = PromptCorruption{CorruptionMode::Gaussian, sigma};
      else if (!corrupt.empty()) throw config_error("unknown corruption mode " + corrupt);
      const auto inputs = per_video<DecoderInput>(feats, g, false, [&](const FrameFeatures& f) {
        const SaliencyPrompt prompt = init_saliency_prompt(f.dim(), cfg.seed);
        DecoderInput in = assemble_stage(f, lookup(sal, f.video_id, "saliency"), lookup(ret, f.video_id, "retrieval"),
                                         prompt);
        if (how) in.sequence.middleRows(in.offsets[1], in.lengths[1]) =
                     corrupt_prompt(in.section(1), *how, substream_seed(cfg.seed, "prompt_noise", f.video_id));
        return in;
      });
      fs::create_directories(out);
      for (std::size_t i = 0; i < feats.size(); ++i)
        if (inputs[i]) write_file(fs::path(out) / (feats[i].video_id + ".stin"), encode_decoder_input(*inputs[i]));
      return 0;
    }

    if (*eval) {
      Timer t("eval");
      const auto anns = by_video(load_annotations(gt), "annotation");
      std::vector<VideoReport> reports;
      for (const auto& rec : load_segments(pred)) reports.push_back(evaluate_video(rec, lookup(anns, rec.video_id, "annotation")));
      const auto report = aggregate_reports(std::move(reports));
      const fs::path json_path(out);
      write_file(json_path, report_to_json(report));
      write_file(fs::path(json_path).replace_extension(".txt"), report_to_table(report));
      if (g.csv) write_file(fs::path(json_path).replace_extension(".csv"), report_to_csv(report));
      std::fputs(report_to_table(report).c_str(), stdout);
      return 0;
    }

    if (*pipeline) {
      Timer t("pipeline");
      RunOptions opts{g.jobs, fail_fast, dump_plans, parse_segmenter(baseline)};
      const auto run = run_pipeline(cfg, features, annotations, datastore, head, out, opts);
      if (g.csv) write_file(fs::path(out) / "report.csv", report_to_csv(run.report));
      spdlog::info("{} videos processed, {} failed", run.processed.size(), run.failed.size());
      std::fputs(report_to_table(run.report).c_str(), stdout);
      return 0;
    }
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return exit_code(ErrorKind::Data);
  }
  return 0;
}
