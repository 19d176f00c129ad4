#include "starc/metrics.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <algorithm>
#include <tuple>

namespace starc {

double iou(const Interval& a, const Interval& b) {
  if (a.length() <= 0 || b.length() <= 0) throw data_error("iou: empty interval");
  const Index inter = std::max<Index>(0, std::min(a.end, b.end) - std::max(a.start, b.start));
  const Index uni = a.length() + b.length() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

namespace {

double harmonic(double p, double r) { return p + r > 0 ? 2 * p * r / (p + r) : 0.0; }

std::vector<double> best_iou(const std::vector<Interval>& from, const std::vector<Interval>& against) {
  std::vector<double> out(from.size(), 0.0);
  for (std::size_t i = 0; i < from.size(); ++i)
    for (const auto& b : against) out[i] = std::max(out[i], iou(from[i], b));
  return out;
}

double fraction_at_least(const std::vector<double>& v, double t) {
  if (v.empty()) return 0.0;
  const auto hits = std::count_if(v.begin(), v.end(), [t](double x) { return x >= t; });
  return static_cast<double>(hits) / static_cast<double>(v.size());
}

}  // namespace

VideoLocalization localization_prf(const std::vector<Interval>& pred, const std::vector<Interval>& gt,
                                   const std::vector<double>& thresholds) {
  if (thresholds.empty()) throw config_error("localization_prf: no thresholds");
  VideoLocalization out;
  out.empty_predictions = pred.empty();
  out.empty_ground_truth = gt.empty();
  const auto pred_best = best_iou(pred, gt);
  const auto gt_best = best_iou(gt, pred);
  for (double t : thresholds) {
    ThresholdScores s{t, fraction_at_least(pred_best, t), fraction_at_least(gt_best, t), 0};
    s.f1 = harmonic(s.precision, s.recall);
    out.precision += s.precision;
    out.recall += s.recall;
    out.f1_threshold_mean += s.f1;
    out.per_threshold.push_back(s);
  }
  const double n = static_cast<double>(thresholds.size());
  out.precision /= n;
  out.recall /= n;
  out.f1_threshold_mean /= n;
  out.f1 = harmonic(out.precision, out.recall);
  return out;
}

SegmentQuality segment_quality(const std::vector<Interval>& pred, const std::vector<Interval>& gt) {
  if (gt.empty()) throw data_error("segment_quality: empty ground truth");
  SegmentQuality q;
  const auto gt_best = best_iou(gt, pred);
  q.recall_at_05 = fraction_at_least(gt_best, 0.5);
  for (double v : gt_best) q.mean_iou += v;
  q.mean_iou /= static_cast<double>(gt.size());

  std::vector<std::tuple<double, std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < pred.size(); ++i)
    for (std::size_t j = 0; j < gt.size(); ++j) {
      const double v = iou(pred[i], gt[j]);
      if (v >= 0.5) pairs.emplace_back(v, i, j);
    }
  std::sort(pairs.begin(), pairs.end(), [](const auto& a, const auto& b) {
    if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a) > std::get<0>(b);
    return std::tie(std::get<1>(a), std::get<2>(a)) < std::tie(std::get<1>(b), std::get<2>(b));
  });
  std::vector<bool> pred_used(pred.size()), gt_used(gt.size());
  for (const auto& [v, i, j] : pairs) {
    if (pred_used[i] || gt_used[j]) continue;
    pred_used[i] = gt_used[j] = true;
    ++q.matched_segments;
  }
  return q;
}

LocalizationReport aggregate_reports(std::vector<VideoReport> videos, const std::vector<double>& thresholds) {
  std::sort(videos.begin(), videos.end(),
            [](const VideoReport& a, const VideoReport& b) { return a.video_id < b.video_id; });
  LocalizationReport r;
  r.thresholds = thresholds;
  for (double t : thresholds) r.per_threshold.push_back({t, 0, 0, 0});
  int with_gt = 0;
  for (const auto& v : videos) {
    ++r.videos;
    if (v.localization.empty_predictions) ++r.videos_without_predictions;
    if (v.localization.empty_ground_truth) {
      ++r.videos_without_ground_truth;
    } else {
      ++with_gt;
      r.recall += v.localization.recall;
      r.recall_at_05 += v.quality.recall_at_05;
      r.mean_iou += v.quality.mean_iou;
    }
    r.precision += v.localization.precision;
    r.f1_threshold_mean += v.localization.f1_threshold_mean;
    r.matched_segments += v.quality.matched_segments;
    for (std::size_t i = 0; i < thresholds.size(); ++i) {
      r.per_threshold[i].precision += v.localization.per_threshold[i].precision;
      if (!v.localization.empty_ground_truth) r.per_threshold[i].recall += v.localization.per_threshold[i].recall;
    }
  }
  if (r.videos > 0) {
    r.precision /= r.videos;
    r.f1_threshold_mean /= r.videos;
    for (auto& t : r.per_threshold) t.precision /= r.videos;
  }
  if (with_gt > 0) {
    r.recall /= with_gt;
    r.recall_at_05 /= with_gt;
    r.mean_iou /= with_gt;
    for (auto& t : r.per_threshold) t.recall /= with_gt;
  }
  for (auto& t : r.per_threshold) t.f1 = harmonic(t.precision, t.recall);
  r.f1 = harmonic(r.precision, r.recall);
  r.per_video = std::move(videos);
  return r;
}

std::string report_to_json(const LocalizationReport& r) {
  using nlohmann::json;
  json per_t = json::array();
  for (const auto& t : r.per_threshold)
    per_t.push_back({{"threshold", t.threshold}, {"precision", t.precision}, {"recall", t.recall}, {"f1", t.f1}});
  json per_v = json::array();
  for (const auto& v : r.per_video)
    per_v.push_back({{"video_id", v.video_id},
                     {"precision", v.localization.precision},
                     {"recall", v.localization.recall},
                     {"f1", v.localization.f1},
                     {"recall_at_05", v.quality.recall_at_05},
                     {"mean_iou", v.quality.mean_iou},
                     {"matched_segments", v.quality.matched_segments},
                     {"empty_predictions", v.localization.empty_predictions},
                     {"empty_ground_truth", v.localization.empty_ground_truth}});
  json j = {{"thresholds", r.thresholds},
            {"precision", r.precision},
            {"recall", r.recall},
            {"f1", r.f1},
            {"f1_threshold_mean", r.f1_threshold_mean},
            {"recall_at_05", r.recall_at_05},
            {"mean_iou", r.mean_iou},
            {"matched_segments", r.matched_segments},
            {"videos", r.videos},
            {"videos_without_predictions", r.videos_without_predictions},
            {"videos_without_ground_truth", r.videos_without_ground_truth},
            {"per_threshold", per_t},
            {"per_video", per_v}};
  return j.dump(2) + "\n";
}

std::string report_to_table(const LocalizationReport& r) {
  std::string out = fmt::format("{:<10} {:>10} {:>10} {:>10}\n", "IoU", "precision", "recall", "F1");
  for (const auto& t : r.per_threshold)
    out += fmt::format("{:<10.2f} {:>10.4f} {:>10.4f} {:>10.4f}\n", t.threshold, t.precision, t.recall, t.f1);
  out += fmt::format("{:<10} {:>10.4f} {:>10.4f} {:>10.4f}\n", "average", r.precision, r.recall, r.f1);
  out += fmt::format("\n{:<20} {:>10.4f}\n{:<20} {:>10.4f}\n{:<20} {:>10}\n{:<20} {:>10}\n", "Recall@0.5",
                     r.recall_at_05, "Mean IoU", r.mean_iou, "Matched segments", r.matched_segments, "Videos",
                     r.videos);
  return out;
}

std::string report_to_csv(const LocalizationReport& r) {
  std::string out = "threshold,precision,recall,f1\n";
  for (const auto& t : r.per_threshold)
    out += fmt::format("{},{},{},{}\n", t.threshold, t.precision, t.recall, t.f1);
  out += fmt::format("average,{},{},{}\n", r.precision, r.recall, r.f1);
  return out;
}

}  // namespace starc
