#pragma once

// Temporal localization metrics on half-open frame intervals.

#include "starc/common.hpp"
#include "starc/features.hpp"

#include <string>
#include <vector>

namespace starc {

using Interval = Event;

inline const std::vector<double> kDefaultThresholds{0.3, 0.5, 0.7, 0.9};

double iou(const Interval& a, const Interval& b);

struct ThresholdScores {
  double threshold = 0;
  double precision = 0;
  double recall = 0;
  double f1 = 0;
};

struct VideoLocalization {
  std::vector<ThresholdScores> per_threshold;
  double precision = 0;  // averaged over thresholds
  double recall = 0;
  double f1 = 0;                 // harmonic mean of averaged P and R
  double f1_threshold_mean = 0;  // mean of per-threshold F1
  bool empty_predictions = false;
  bool empty_ground_truth = false;
};

/// Many-to-one max-IoU matching: a prediction is correct at t when its best
/// IoU against any ground-truth event is >= t, and symmetrically for recall.
/// Empty predictions score precision 0 (flagged); empty ground truth leaves
/// recall undefined (flagged, reported as 0).
VideoLocalization localization_prf(const std::vector<Interval>& pred, const std::vector<Interval>& gt,
                                   const std::vector<double>& thresholds = kDefaultThresholds);

struct SegmentQuality {
  double recall_at_05 = 0;
  double mean_iou = 0;
  int matched_segments = 0;
};

/// Recall@0.5 and mean best IoU per ground-truth event; matched_segments is a
/// greedy one-to-one matching taking pairs by descending IoU (ties by
/// prediction then event index) while IoU >= 0.5.
SegmentQuality segment_quality(const std::vector<Interval>& pred, const std::vector<Interval>& gt);

struct VideoReport {
  std::string video_id;
  VideoLocalization localization;
  SegmentQuality quality;
};

struct LocalizationReport {
  std::vector<double> thresholds;
  std::vector<ThresholdScores> per_threshold;  // corpus means
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  double f1_threshold_mean = 0;
  double recall_at_05 = 0;
  double mean_iou = 0;
  int matched_segments = 0;  // summed over videos
  int videos = 0;
  int videos_without_predictions = 0;
  int videos_without_ground_truth = 0;
  std::vector<VideoReport> per_video;  // sorted by video id
};

/// Unweighted mean over videos, reduced in sorted video-id order. Videos
/// without ground truth are excluded from recall-side averages.
LocalizationReport aggregate_reports(std::vector<VideoReport> videos,
                                     const std::vector<double>& thresholds = kDefaultThresholds);

std::string report_to_json(const LocalizationReport& report);
std::string report_to_table(const LocalizationReport& report);
std::string report_to_csv(const LocalizationReport& report);

}  // namespace starc
