#pragma once

#include "starc/common.hpp"

#include <cstdint>
#include <vector>

namespace starc {

struct Segment {
  int anchor_id = 0;
  Index start = 0;
  Index end = 0;  // exclusive
  double score_ot = 0;
  double score_len = 0;
  double score = 0;

  Index length() const { return end - start; }
};

// Ordered partition of [0, F_v) plus the indices chosen for retrieval.
struct SegmentSet {
  std::vector<Segment> segments;
  std::vector<std::size_t> selected;  // temporal order

  std::vector<Segment> selected_segments() const;
};

/// Per-frame argmax anchor (lowest index on ties), run-length encoded.
SegmentSet decode_segments(const MatrixXd& plan);

/// Run-length encodes a per-frame label sequence.
SegmentSet segments_from_labels(const std::vector<int>& labels);

/// S_OT = mean plan mass on the segment's own anchor column,
/// S_len = log(1 + L), score = S_OT * S_len.
SegmentSet score_segments(SegmentSet segs, const MatrixXd& plan);

/// Keeps the k highest scores among segments of length >= min_length (ties
/// broken by earlier start) and reports them in temporal order.
SegmentSet select_topk(SegmentSet segs, int k, int min_length = 1);

/// Saliency-weighted mean of the segment's rows of xs; falls back to the
/// plain mean when the segment carries no saliency mass.
VectorXd pool_segment_features(const Segment& seg, const MatrixXd& xs, const VectorXd& prior);

/// k contiguous segments of near-equal length, remainder to the earliest.
SegmentSet baseline_uniform(Index frames, int k);

struct KMeansResult {
  std::vector<int> labels;
  MatrixXd centroids;
  int iterations = 0;
  bool converged = false;
};

/// Lloyd's iterations with farthest-point seeding (first centre drawn from
/// the seeded stream). An empty cluster is re-seeded at the point farthest
/// from its current centre; when every point coincides with its centre the
/// cluster stays empty.
KMeansResult kmeans(const MatrixXd& xs, int k, std::uint64_t seed, int max_iter = 100);

/// k-means labels turned into contiguous runs. Without a plan the segments
/// are scored by S_len alone (S_OT fixed to 1).
SegmentSet baseline_kmeans(const MatrixXd& xs, int k, std::uint64_t seed);

}  // namespace starc
