#include "starc/segments.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace starc {

std::vector<Segment> SegmentSet::selected_segments() const {
  std::vector<Segment> out;
  out.reserve(selected.size());
  for (auto i : selected) out.push_back(segments.at(i));
  return out;
}

SegmentSet segments_from_labels(const std::vector<int>& labels) {
  SegmentSet out;
  Index start = 0;
  const Index n = static_cast<Index>(labels.size());
  for (Index i = 1; i <= n; ++i) {
    if (i == n || labels[static_cast<std::size_t>(i)] != labels[static_cast<std::size_t>(start)]) {
      out.segments.push_back({labels[static_cast<std::size_t>(start)], start, i});
      start = i;
    }
  }
  return out;
}

SegmentSet decode_segments(const MatrixXd& plan) {
  std::vector<int> labels(static_cast<std::size_t>(plan.rows()));
  for (Index n = 0; n < plan.rows(); ++n) {
    Index best = 0;
    plan.row(n).maxCoeff(&best);
    labels[static_cast<std::size_t>(n)] = static_cast<int>(best);
  }
  return segments_from_labels(labels);
}

SegmentSet score_segments(SegmentSet segs, const MatrixXd& plan) {
  for (auto& s : segs.segments) {
    if (s.end > plan.rows() || s.anchor_id >= plan.cols()) throw data_error("score_segments: segment outside plan");
    const double len = static_cast<double>(s.length());
    s.score_ot = plan.col(s.anchor_id).segment(s.start, s.length()).sum() / len;
    s.score_len = std::log1p(len);
    s.score = s.score_ot * s.score_len;
  }
  return segs;
}

SegmentSet select_topk(SegmentSet segs, int k, int min_length) {
  if (k < 1) throw config_error("select_topk: k must be >= 1");
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < segs.segments.size(); ++i)
    if (segs.segments[i].length() >= min_length) order.push_back(i);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& sa = segs.segments[a];
    const auto& sb = segs.segments[b];
    if (sa.score != sb.score) return sa.score > sb.score;
    return sa.start < sb.start;
  });
  order.resize(std::min(order.size(), static_cast<std::size_t>(k)));
  std::sort(order.begin(), order.end());
  segs.selected = std::move(order);
  return segs;
}

VectorXd pool_segment_features(const Segment& seg, const MatrixXd& xs, const VectorXd& prior) {
  if (seg.length() <= 0) throw data_error("pool_segment_features: empty segment");
  if (seg.end > xs.rows() || prior.size() != xs.rows()) throw data_error("pool_segment_features: out of range");
  const auto rows = xs.middleRows(seg.start, seg.length());
  const auto weights = prior.segment(seg.start, seg.length());
  const double mass = weights.sum();
  if (!(mass > 0)) {
    spdlog::info("segment [{}, {}) has no saliency mass, using the uniform mean", seg.start, seg.end);
    return rows.colwise().mean().transpose();
  }
  return rows.transpose() * weights / mass;
}

SegmentSet baseline_uniform(Index frames, int k) {
  if (k < 1 || k > frames) throw config_error("baseline_uniform: need 1 <= k <= F_v");
  SegmentSet out;
  const Index base = frames / k;
  const Index extra = frames % k;
  Index start = 0;
  for (int i = 0; i < k; ++i) {
    const Index len = base + (i < extra ? 1 : 0);
    out.segments.push_back({i, start, start + len, 1.0, std::log1p(static_cast<double>(len)),
                            std::log1p(static_cast<double>(len))});
    start += len;
  }
  out.selected.resize(out.segments.size());
  std::iota(out.selected.begin(), out.selected.end(), std::size_t{0});
  return out;
}

KMeansResult kmeans(const MatrixXd& xs, int k, std::uint64_t seed, int max_iter) {
  const Index n = xs.rows();
  if (k < 1 || k > n) throw config_error("kmeans: need 1 <= k <= number of frames");
  auto sq_dist_to = [&](const VectorXd& c) { return (xs.rowwise() - c.transpose()).rowwise().squaredNorm().eval(); };

  Rng rng = make_rng(seed, "kmeans");
  KMeansResult res;
  res.centroids.resize(k, xs.cols());
  Index first = static_cast<Index>(uniform_index(rng, static_cast<std::uint64_t>(n)));
  res.centroids.row(0) = xs.row(first);
  VectorXd nearest = sq_dist_to(res.centroids.row(0).transpose());
  for (int c = 1; c < k; ++c) {
    Index far = 0;
    nearest.maxCoeff(&far);
    res.centroids.row(c) = xs.row(far);
    nearest = nearest.cwiseMin(sq_dist_to(res.centroids.row(c).transpose()));
  }

  res.labels.assign(static_cast<std::size_t>(n), -1);
  for (int it = 0; it < max_iter; ++it) {
    bool changed = false;
    for (Index i = 0; i < n; ++i) {
      Index best = 0;
      (res.centroids.rowwise() - xs.row(i)).rowwise().squaredNorm().minCoeff(&best);
      if (res.labels[static_cast<std::size_t>(i)] != best) {
        res.labels[static_cast<std::size_t>(i)] = static_cast<int>(best);
        changed = true;
      }
    }
    res.iterations = it + 1;
    if (!changed) {
      res.converged = true;
      break;
    }
    MatrixXd sums = MatrixXd::Zero(k, xs.cols());
    VectorXd counts = VectorXd::Zero(k);
    for (Index i = 0; i < n; ++i) {
      const int l = res.labels[static_cast<std::size_t>(i)];
      sums.row(l) += xs.row(i);
      counts(l) += 1;
    }
    for (int c = 0; c < k; ++c) {
      if (counts(c) > 0) {
        res.centroids.row(c) = sums.row(c) / counts(c);
        continue;
      }
      // Re-seed at the point farthest from its assigned centre.
      VectorXd dist(n);
      for (Index i = 0; i < n; ++i)
        dist(i) = (xs.row(i) - res.centroids.row(res.labels[static_cast<std::size_t>(i)])).squaredNorm();
      Index far = 0;
      if (dist.maxCoeff(&far) > 0) res.centroids.row(c) = xs.row(far);
    }
  }
  return res;
}

SegmentSet baseline_kmeans(const MatrixXd& xs, int k, std::uint64_t seed) {
  const auto km = kmeans(xs, k, seed);
  SegmentSet out = segments_from_labels(km.labels);
  for (auto& s : out.segments) {
    s.score_ot = 1.0;
    s.score_len = std::log1p(static_cast<double>(s.length()));
    s.score = s.score_len;
  }
  return out;
}

}  // namespace starc
