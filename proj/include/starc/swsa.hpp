#pragma once

// Sliding-window self-attention refinement. Parameter free: queries, keys
// and values are the input rows themselves.

#include "starc/common.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <vector>

namespace starc {

struct SwsaConfig {
  std::vector<int> windows{8, 32, 64};
  int stride = 1;
  double ln_epsilon = 1e-5;
};

/// softmax(X X^T / sqrt(D)) X for one window of rows.
template <typename Derived>
Matrix<typename Derived::Scalar> window_attention(const Eigen::MatrixBase<Derived>& seg) {
  using Scalar = typename Derived::Scalar;
  if (!seg.allFinite()) throw numerical_error("window_attention: non-finite input");
  const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(seg.cols()));
  Matrix<Scalar> logits = (seg * seg.transpose()) * scale;
  for (Index i = 0; i < logits.rows(); ++i) {
    auto row = logits.row(i);
    row.array() = (row.array() - row.maxCoeff()).exp();
    row /= row.sum();
  }
  return logits * seg;
}

/// Per-row layer normalization over the feature dimension, no affine terms.
template <typename Derived>
Matrix<typename Derived::Scalar> layer_norm_rows(const Eigen::MatrixBase<Derived>& x, double eps) {
  using Scalar = typename Derived::Scalar;
  Matrix<Scalar> out(x.rows(), x.cols());
  const Scalar d = static_cast<Scalar>(x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    const Scalar mean = x.row(i).sum() / d;
    const auto centered = (x.row(i).array() - mean).eval();
    const Scalar var = centered.square().sum() / d;
    out.row(i) = centered / std::sqrt(var + static_cast<Scalar>(eps));
  }
  return out;
}

/// Refines X into X' = X + LayerNorm(hat X), where hat X averages the
/// attention outputs of every window (all sizes, stride 1) covering a frame.
/// Windows never extend into padding; a window size larger than valid_len is
/// skipped. If every size is skipped the whole valid range forms one window.
/// Padding rows are returned unchanged.
template <typename Derived>
Matrix<typename Derived::Scalar> swsa_refine(const Eigen::MatrixBase<Derived>& x, const SwsaConfig& cfg,
                                             Index valid_len) {
  using Scalar = typename Derived::Scalar;
  if (x.rows() < 1) throw data_error("swsa_refine: empty sequence");
  if (valid_len < 0 || valid_len > x.rows()) throw data_error("swsa_refine: valid_len exceeds F");
  if (cfg.stride != 1) throw config_error("swsa_refine: only stride 1 is supported");

  Matrix<Scalar> out = x;
  if (valid_len == 0) return out;

  std::vector<Index> sizes;
  for (int w : cfg.windows) {
    if (w > valid_len) {
      spdlog::warn("swsa: window {} exceeds valid length {}, skipped", w, valid_len);
      continue;
    }
    sizes.push_back(w);
  }
  if (sizes.empty()) sizes.push_back(valid_len);

  Matrix<Scalar> acc = Matrix<Scalar>::Zero(valid_len, x.cols());
  Vector<Scalar> count = Vector<Scalar>::Zero(valid_len);
  for (Index w : sizes) {
    for (Index start = 0; start + w <= valid_len; ++start) {
      acc.middleRows(start, w) += window_attention(x.middleRows(start, w));
      count.segment(start, w).array() += Scalar(1);
    }
  }
  if ((count.array() < Scalar(1)).any()) throw numerical_error("swsa_refine: uncovered frame");
  acc.array().colwise() /= count.array();

  out.topRows(valid_len) += layer_norm_rows(acc, cfg.ln_epsilon);
  return out;
}

template <typename Derived>
Matrix<typename Derived::Scalar> swsa_refine(const Eigen::MatrixBase<Derived>& x, const SwsaConfig& cfg,
                                             const Mask& mask) {
  if (mask.size() != x.rows()) throw data_error("swsa_refine: mask length mismatch");
  return swsa_refine(x, cfg, valid_prefix_length(mask));
}

}  // namespace starc
