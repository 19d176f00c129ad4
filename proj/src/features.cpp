#include "starc/features.hpp"

#include "starc/binary_io.hpp"

#include <json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace starc {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::string_view kFeatureMagic = "SFT1";

}  // namespace

void FrameFeatures::validate() const {
  if (spatial.rows() < 1 || spatial.cols() < 1) throw data_error("features must have F >= 1 and D >= 1");
  if (spatial.rows() != encoded.rows() || spatial.cols() != encoded.cols())
    throw data_error("spatial and encoded shapes differ");
  if (valid_len < 0 || valid_len > spatial.rows()) throw data_error("valid_len exceeds F");
  if (!spatial.allFinite() || !encoded.allFinite()) throw data_error("non-finite feature value");
  // +0 only, so that padding has one byte representation.
  auto positive_zero = [](const auto& rows) {
    return rows.unaryExpr([](float v) { return v == 0.0f && !std::signbit(v); }).all();
  };
  const Index pad = spatial.rows() - valid_len;
  if (pad > 0 && (!positive_zero(spatial.bottomRows(pad)) || !positive_zero(encoded.bottomRows(pad))))
    throw data_error("padding rows must be zero");
}

void PipelineConfig::validate() const {
  if (!(tau > 0)) throw config_error("tau must be > 0");
  if (!(epsilon > 0)) throw config_error("epsilon must be > 0");
  if (K < 1) throw config_error("K must be >= 1");
  if (top_k < 1 || top_k > K) throw config_error("top_k must satisfy 1 <= top_k <= K");
  if (top_p < 1) throw config_error("top_p must be >= 1");
  if (!(alpha >= 0 && alpha <= 1)) throw config_error("alpha must lie in [0, 1]");
  if (!(gamma >= 0)) throw config_error("gamma must be >= 0");
  if (rho != 0.0) throw config_error("rho must be 0 (unbalanced anchor relaxation is not supported)");
  if (windows.empty()) throw config_error("windows must be non-empty");
  for (std::size_t i = 0; i < windows.size(); ++i) {
    if (windows[i] < 2) throw config_error("window sizes must be >= 2");
    if (windows[i] > F_max) throw config_error("window size exceeds F_max");
    if (i > 0 && windows[i] <= windows[i - 1]) throw config_error("windows must be strictly increasing");
  }
  if (epochs < 0) throw config_error("epochs must be >= 0");
  if (!(learning_rate > 0)) throw config_error("learning_rate must be > 0");
  if (lr_schedule != "constant" && lr_schedule != "warmup_cosine")
    throw config_error("lr_schedule must be 'constant' or 'warmup_cosine'");
  if (max_outer_iter < 1 || max_inner_iter < 1) throw config_error("solver iteration limits must be >= 1");
  if (!(plan_tol > 0)) throw config_error("plan_tol must be > 0");
  if (!(ln_epsilon > 0)) throw config_error("ln_epsilon must be > 0");
  if (min_segment_len < 1) throw config_error("min_segment_len must be >= 1");
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

void write_file(const fs::path& path, std::string_view bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw data_error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw data_error("write failed for " + path.string());
}

std::string encode_features(const FrameFeatures& f) {
  f.validate();
  std::string out;
  out.reserve(4 + 24 + static_cast<std::size_t>(f.spatial.size()) * 8);
  out.append(kFeatureMagic);
  binio::put_u64(out, static_cast<std::uint64_t>(f.frames()));
  binio::put_u64(out, static_cast<std::uint64_t>(f.dim()));
  binio::put_u64(out, static_cast<std::uint64_t>(f.valid_len));
  binio::put_f32_rows(out, f.spatial);
  binio::put_f32_rows(out, f.encoded);
  return out;
}

FrameFeatures decode_features(std::string_view bytes, std::string video_id) {
  binio::Reader r(bytes);
  if (r.take(4, "header") != kFeatureMagic) throw data_error("bad magic, expected SFT1");
  const std::uint64_t frames = r.u64("header");
  const std::uint64_t dim = r.u64("header");
  const std::uint64_t valid_len = r.u64("header");
  if (frames == 0 || dim == 0) throw data_error("F and D must be >= 1");
  if (valid_len > frames) throw data_error("valid_len exceeds F");
  // Guard the multiplication before trusting header sizes.
  if (dim > r.remaining() || frames > r.remaining() / dim / 8) throw data_error("truncated body");
  const std::uint64_t body = frames * dim * 8;
  if (r.remaining() < body) throw data_error("truncated body");
  if (r.remaining() > body) throw data_error("header/body size mismatch");

  FrameFeatures f;
  f.video_id = std::move(video_id);
  f.valid_len = static_cast<Index>(valid_len);
  f.spatial = r.f32_rows(static_cast<Index>(frames), static_cast<Index>(dim), "body");
  f.encoded = r.f32_rows(static_cast<Index>(frames), static_cast<Index>(dim), "body");
  f.validate();
  return f;
}

void save_features(const FrameFeatures& f, const fs::path& path) { write_file(path, encode_features(f)); }

FrameFeatures load_features(const fs::path& path) {
  try {
    return decode_features(read_file(path), path.stem().string());
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

std::vector<FrameFeatures> load_features_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw data_error("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".sfeat") files.push_back(entry.path());
  std::sort(files.begin(), files.end(),
            [](const fs::path& a, const fs::path& b) { return a.stem().string() < b.stem().string(); });
  std::vector<FrameFeatures> out;
  out.reserve(files.size());
  for (const auto& p : files) out.push_back(load_features(p));
  return out;
}

HighlightLabels derive_highlight_labels(const EventAnnotation& ann, Index frames, Index valid_len) {
  if (valid_len < 0 || valid_len > frames) throw data_error("valid_len exceeds F");
  HighlightLabels out{Mask::Constant(frames, false), prefix_mask(frames, valid_len)};
  for (const auto& ev : ann.events) {
    if (ev.start < 0 || ev.start >= ev.end) throw data_error("empty or inverted event in " + ann.video_id);
    if (ev.end > valid_len) throw data_error("event exceeds valid_len in " + ann.video_id);
    out.labels.segment(ev.start, ev.length()).setConstant(true);
  }
  if (ann.events.empty())
    spdlog::warn("{}: no events; video is unusable for saliency training", ann.video_id);
  return out;
}

std::vector<std::string> lint_annotation(const EventAnnotation& ann) {
  std::vector<std::string> warnings;
  for (std::size_t i = 1; i < ann.events.size(); ++i) {
    if (ann.events[i].start < ann.events[i - 1].end)
      warnings.push_back(ann.video_id + ": event " + std::to_string(i) + " overlaps event " +
                         std::to_string(i - 1));
  }
  return warnings;
}

EventAnnotation parse_annotation_line(const std::string& line) {
  EventAnnotation ann;
  try {
    const json j = json::parse(line);
    ann.video_id = j.at("video_id").get<std::string>();
    ann.valid_len = j.at("valid_len").get<Index>();
    for (const auto& ev : j.at("events")) {
      if (!ev.is_array() || ev.size() != 2) throw data_error("event must be [start, end]");
      ann.events.push_back({ev[0].get<Index>(), ev[1].get<Index>()});
    }
  } catch (const json::exception& e) {
    throw data_error(std::string("malformed annotation line: ") + e.what());
  }
  for (std::size_t i = 0; i < ann.events.size(); ++i) {
    const auto& ev = ann.events[i];
    if (ev.start < 0 || ev.start >= ev.end) throw data_error(ann.video_id + ": event with start >= end");
    if (ev.end > ann.valid_len) throw data_error(ann.video_id + ": event exceeds valid_len");
    if (i > 0 && ev.start < ann.events[i - 1].start) throw data_error(ann.video_id + ": events not sorted");
  }
  for (const auto& w : lint_annotation(ann)) spdlog::debug("{}", w);
  return ann;
}

std::string format_annotation_line(const EventAnnotation& ann) {
  json events = json::array();
  for (const auto& ev : ann.events) events.push_back({ev.start, ev.end});
  json j = {{"video_id", ann.video_id}, {"valid_len", ann.valid_len}, {"events", events}};
  return j.dump();
}

std::vector<EventAnnotation> load_annotations(const fs::path& path) {
  std::istringstream in(read_file(path));
  std::vector<EventAnnotation> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(parse_annotation_line(line));
  }
  return out;
}

void save_annotations(const std::vector<EventAnnotation>& anns, const fs::path& path) {
  std::string out;
  for (const auto& a : anns) {
    out += format_annotation_line(a);
    out += '\n';
  }
  write_file(path, out);
}

PipelineConfig parse_config(const std::string& json_text) {
  PipelineConfig cfg;
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw config_error(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw config_error("config must be a JSON object");
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "tau") cfg.tau = value.get<double>();
      else if (key == "lambda") cfg.lambda = value.get<double>();
      else if (key == "mu") cfg.mu = value.get<double>();
      else if (key == "gamma") cfg.gamma = value.get<double>();
      else if (key == "rho") cfg.rho = value.get<double>();
      else if (key == "alpha") cfg.alpha = value.get<double>();
      else if (key == "epsilon") cfg.epsilon = value.get<double>();
      else if (key == "K") cfg.K = value.get<int>();
      else if (key == "top_k") cfg.top_k = value.get<int>();
      else if (key == "top_p") cfg.top_p = value.get<int>();
      else if (key == "windows") cfg.windows = value.get<std::vector<int>>();
      else if (key == "F_max") cfg.F_max = value.get<int>();
      else if (key == "seed") cfg.seed = value.get<std::uint64_t>();
      else if (key == "epochs") cfg.epochs = value.get<int>();
      else if (key == "learning_rate") cfg.learning_rate = value.get<double>();
      else if (key == "lr_schedule") cfg.lr_schedule = value.get<std::string>();
      else if (key == "max_outer_iter") cfg.max_outer_iter = value.get<int>();
      else if (key == "max_inner_iter") cfg.max_inner_iter = value.get<int>();
      else if (key == "plan_tol") cfg.plan_tol = value.get<double>();
      else if (key == "ln_epsilon") cfg.ln_epsilon = value.get<double>();
      else if (key == "min_segment_len") cfg.min_segment_len = value.get<int>();
      else throw config_error("unknown config key: " + key);
    }
  } catch (const json::exception& e) {
    throw config_error(std::string("bad config value: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

PipelineConfig load_config(const fs::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error& e) {
    throw config_error(e.what());
  }
  return parse_config(text);
}

std::string config_to_json(const PipelineConfig& cfg) {
  json j = {{"tau", cfg.tau},
            {"lambda", cfg.lambda},
            {"mu", cfg.mu},
            {"gamma", cfg.gamma},
            {"rho", cfg.rho},
            {"alpha", cfg.alpha},
            {"epsilon", cfg.epsilon},
            {"K", cfg.K},
            {"top_k", cfg.top_k},
            {"top_p", cfg.top_p},
            {"windows", cfg.windows},
            {"F_max", cfg.F_max},
            {"seed", cfg.seed},
            {"epochs", cfg.epochs},
            {"learning_rate", cfg.learning_rate},
            {"lr_schedule", cfg.lr_schedule},
            {"max_outer_iter", cfg.max_outer_iter},
            {"max_inner_iter", cfg.max_inner_iter},
            {"plan_tol", cfg.plan_tol},
            {"ln_epsilon", cfg.ln_epsilon},
            {"min_segment_len", cfg.min_segment_len}};
  return j.dump(2);
}

}  // namespace starc
