#pragma once

// Highlight-detection head: attention pooling, bilinear frame scores, masked
// listwise softmax loss and its analytic gradient.

#include "starc/common.hpp"

#include <cmath>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

namespace starc {

template <typename Scalar>
struct BasicSaliencyHead {
  Vector<Scalar> w_pool;  // pooling query
  Matrix<Scalar> W1;      // frame projection, D x D
  Matrix<Scalar> W2;      // global-context projection, D x D
  Scalar tau = Scalar(0.5);

  Index dim() const { return w_pool.size(); }

  void validate() const {
    const Index d = dim();
    if (d < 1 || W1.rows() != d || W1.cols() != d || W2.rows() != d || W2.cols() != d)
      throw data_error("saliency head: inconsistent parameter shapes");
    if (!(tau > 0)) throw config_error("saliency head: tau must be > 0");
    if (!w_pool.allFinite() || !W1.allFinite() || !W2.allFinite())
      throw numerical_error("saliency head: non-finite parameter");
  }
};

using SaliencyHead = BasicSaliencyHead<double>;

template <typename Scalar>
struct BasicSaliencyOutput {
  Vector<Scalar> scores;        // P_s, one per frame (masked frames included)
  Vector<Scalar> pooled;        // X'_g
  Vector<Scalar> pool_weights;  // zero on masked frames
};

using SaliencyOutput = BasicSaliencyOutput<double>;

template <typename Scalar>
struct BasicSaliencyGrad {
  Vector<Scalar> w_pool;
  Matrix<Scalar> W1;
  Matrix<Scalar> W2;
};

using SaliencyGrad = BasicSaliencyGrad<double>;

namespace detail {

// Softmax over the entries where mask is set; zero elsewhere. Max-shifted.
template <typename Scalar>
Vector<Scalar> masked_softmax(const Vector<Scalar>& logits, const Mask& mask) {
  Scalar top = -std::numeric_limits<Scalar>::infinity();
  for (Index n = 0; n < logits.size(); ++n)
    if (mask(n)) top = std::max(top, logits(n));
  if (!std::isfinite(top)) throw numerical_error("masked softmax: no finite valid logit");
  Vector<Scalar> p = Vector<Scalar>::Zero(logits.size());
  for (Index n = 0; n < logits.size(); ++n)
    if (mask(n)) p(n) = std::exp(logits(n) - top);
  return p / p.sum();
}

}  // namespace detail

/// Softmax((Xp w_pool) / sqrt(D)) over valid frames and the pooled row.
template <typename Scalar>
std::pair<Vector<Scalar>, Vector<Scalar>> attention_pool(const Matrix<Scalar>& xp, const Mask& mask,
                                                         const Vector<Scalar>& w_pool) {
  if (mask.size() != xp.rows()) throw data_error("attention_pool: mask length mismatch");
  if (w_pool.size() != xp.cols()) throw data_error("attention_pool: query dimension mismatch");
  if (!mask.any()) throw data_error("attention_pool: all frames masked");
  const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(xp.cols()));
  Vector<Scalar> weights = detail::masked_softmax<Scalar>((xp * w_pool) * scale, mask);
  Vector<Scalar> pooled = xp.transpose() * weights;
  return {std::move(pooled), std::move(weights)};
}

/// P_s(x_n) = (W1 x_n) . (W2 g) / sqrt(D) for every frame.
template <typename Scalar>
BasicSaliencyOutput<Scalar> saliency_forward(const BasicSaliencyHead<Scalar>& head, const Matrix<Scalar>& xp,
                                             const Mask& mask) {
  if (xp.rows() < 1) throw data_error("saliency_forward: empty sequence");
  if (xp.cols() != head.dim()) throw data_error("saliency_forward: dimension mismatch");
  auto [pooled, weights] = attention_pool(xp, mask, head.w_pool);
  const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(xp.cols()));
  const Vector<Scalar> context = head.W2 * pooled;
  Vector<Scalar> scores = ((xp * head.W1.transpose()) * context) * scale;
  return {std::move(scores), std::move(pooled), std::move(weights)};
}

/// Masked softmax probabilities exp(s_l/tau) M_l / sum_n exp(s_n/tau) M_n.
template <typename Scalar>
Vector<Scalar> saliency_probabilities(const Vector<Scalar>& scores, const Mask& mask, Scalar tau) {
  if (!(tau > 0)) throw config_error("tau must be > 0");
  return detail::masked_softmax<Scalar>(scores / tau, mask);
}

namespace detail {

template <typename Scalar>
Scalar highlight_count(const Mask& labels, const Mask& mask) {
  if (labels.size() != mask.size()) throw data_error("labels and mask lengths differ");
  const auto n = (labels && mask).count();
  if (n == 0) throw data_error("empty highlight set");
  return static_cast<Scalar>(n);
}

}  // namespace detail

/// Listwise loss -(1 / sum H M) sum_l H_l M_l log p_l.
template <typename Scalar>
Scalar saliency_loss(const Vector<Scalar>& scores, const Mask& labels, const Mask& mask, Scalar tau) {
  if (scores.size() != mask.size()) throw data_error("saliency_loss: length mismatch");
  const Scalar count = detail::highlight_count<Scalar>(labels, mask);
  if (!(tau > 0)) throw config_error("tau must be > 0");
  Scalar top = -std::numeric_limits<Scalar>::infinity();
  for (Index n = 0; n < scores.size(); ++n)
    if (mask(n)) top = std::max(top, scores(n) / tau);
  Scalar sum = 0;
  for (Index n = 0; n < scores.size(); ++n)
    if (mask(n)) sum += std::exp(scores(n) / tau - top);
  const Scalar log_z = top + std::log(sum);
  Scalar loss = 0;
  for (Index n = 0; n < scores.size(); ++n)
    if (labels(n) && mask(n)) loss -= scores(n) / tau - log_z;
  return std::max(Scalar(0), loss / count);
}

/// dL/dscores: (p_n - H_n M_n / sum H M) / tau on valid frames, 0 elsewhere.
template <typename Scalar>
Vector<Scalar> saliency_loss_grad_scores(const Vector<Scalar>& scores, const Mask& labels, const Mask& mask,
                                         Scalar tau) {
  const Scalar count = detail::highlight_count<Scalar>(labels, mask);
  Vector<Scalar> g = saliency_probabilities(scores, mask, tau);
  for (Index n = 0; n < g.size(); ++n)
    if (labels(n) && mask(n)) g(n) -= Scalar(1) / count;
  return g / tau;
}

/// Analytic gradient of the loss w.r.t. every head parameter, including the
/// path through attention pooling. Also returns the loss value.
template <typename Scalar>
std::pair<BasicSaliencyGrad<Scalar>, Scalar> saliency_grad(const BasicSaliencyHead<Scalar>& head,
                                                           const Matrix<Scalar>& xp, const Mask& mask,
                                                           const Mask& labels) {
  const auto fwd = saliency_forward(head, xp, mask);
  const Scalar loss = saliency_loss<Scalar>(fwd.scores, labels, mask, head.tau);
  const Vector<Scalar> d_scores = saliency_loss_grad_scores<Scalar>(fwd.scores, labels, mask, head.tau);

  const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(xp.cols()));
  const Vector<Scalar> context = head.W2 * fwd.pooled;           // v = W2 g
  const Vector<Scalar> x_delta = xp.transpose() * d_scores;      // sum_n delta_n x_n
  const Vector<Scalar> d_context = head.W1 * x_delta * scale;    // dL/dv
  const Vector<Scalar> d_pooled = head.W2.transpose() * d_context;

  // g = sum_n a_n x_n with a = softmax(X w / sqrt(D)) over valid frames.
  const Vector<Scalar> d_weights = xp * d_pooled;
  const Scalar mean_dw = fwd.pool_weights.dot(d_weights);
  const Vector<Scalar> d_logits = fwd.pool_weights.cwiseProduct(
      (d_weights.array() - mean_dw).matrix());

  BasicSaliencyGrad<Scalar> grad;
  grad.W1 = context * x_delta.transpose() * scale;
  grad.W2 = d_context * fwd.pooled.transpose();
  grad.w_pool = xp.transpose() * d_logits * scale;
  return {std::move(grad), loss};
}

/// Sigmoid prior p_s (zero on masked frames) and its L1-normalized variant.
template <typename Scalar>
std::pair<Vector<Scalar>, Vector<Scalar>> saliency_prior(const Vector<Scalar>& scores, const Mask& mask) {
  if (scores.size() != mask.size()) throw data_error("saliency_prior: length mismatch");
  if (!mask.any()) throw data_error("saliency_prior: all frames masked");
  if (!scores.allFinite()) throw numerical_error("saliency_prior: non-finite score");
  Vector<Scalar> prior = Vector<Scalar>::Zero(scores.size());
  for (Index n = 0; n < scores.size(); ++n)
    if (mask(n)) prior(n) = Scalar(1) / (Scalar(1) + std::exp(-scores(n)));
  Vector<Scalar> normalized = prior / prior.sum();
  return {std::move(prior), std::move(normalized)};
}

// Identity plus N(0, 0.01^2) for W1 and W2; zero pooling query.
SaliencyHead init_saliency_head(Index dim, double tau, std::uint64_t seed);

struct TrainingExample {
  std::string video_id;
  MatrixXd features;  // refined X'
  Mask mask;
  Mask labels;
};

struct AdamMoments {
  VectorXd w_pool;
  MatrixXd W1;
  MatrixXd W2;
};

struct TrainState {
  long step = 0;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  AdamMoments first;
  AdamMoments second;
};

struct TrainOptions {
  int epochs = 20;
  double lambda = 6.0;
  std::string lr_schedule = "constant";
  std::uint64_t seed = 0;
};

struct TrainResult {
  SaliencyHead head;
  std::vector<double> epoch_losses;  // mean lambda * loss per epoch
  bool diverged = false;
};

TrainState make_train_state(const SaliencyHead& head, double learning_rate);

// One Adam update of head with gradient grad at the given learning rate.
void adam_step(SaliencyHead& head, const SaliencyGrad& grad, TrainState& state, double learning_rate);

/// Adam over per-video losses lambda * L, one video per update, visiting the
/// corpus in a seeded shuffle each epoch. Videos without a valid highlight
/// frame are skipped with a warning. On a non-finite loss training stops and
/// the last finite head is returned with diverged set.
TrainResult train_saliency(const std::vector<TrainingExample>& corpus, SaliencyHead head,
                           const TrainOptions& opts, TrainState state);

// Checkpoint: u32 header length, JSON header {"D", "tau"}, then f32 payloads
// w_pool, W1 (row-major), W2 (row-major).
std::string encode_head(const SaliencyHead& head);
SaliencyHead decode_head(std::string_view bytes);
void save_head(const SaliencyHead& head, const std::filesystem::path& path);
SaliencyHead load_head(const std::filesystem::path& path);

}  // namespace starc
