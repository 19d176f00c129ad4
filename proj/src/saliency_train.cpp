#include "starc/saliency.hpp"

#include "starc/binary_io.hpp"
#include "starc/features.hpp"

#include <json.hpp>
#include <spdlog/spdlog.h>

#include <numeric>
#include <numbers>

namespace starc {

using nlohmann::json;

SaliencyHead init_saliency_head(Index dim, double tau, std::uint64_t seed) {
  if (dim < 1) throw config_error("saliency head dimension must be >= 1");
  Rng rng = make_rng(seed, "saliency_init");
  SaliencyHead head;
  head.tau = tau;
  head.w_pool = VectorXd::Zero(dim);
  head.W1 = MatrixXd::Identity(dim, dim) + gaussian_matrix(dim, dim, 0.01, rng);
  head.W2 = MatrixXd::Identity(dim, dim) + gaussian_matrix(dim, dim, 0.01, rng);
  head.validate();
  return head;
}

TrainState make_train_state(const SaliencyHead& head, double learning_rate) {
  TrainState s;
  s.learning_rate = learning_rate;
  const Index d = head.dim();
  s.first = {VectorXd::Zero(d), MatrixXd::Zero(d, d), MatrixXd::Zero(d, d)};
  s.second = s.first;
  return s;
}

namespace {

template <typename P>
void adam_update(P& param, const P& grad, P& m, P& v, const TrainState& s, double lr) {
  m = s.beta1 * m + (1 - s.beta1) * grad;
  v = s.beta2 * v + (1 - s.beta2) * grad.cwiseProduct(grad);
  const double c1 = 1 - std::pow(s.beta1, static_cast<double>(s.step));
  const double c2 = 1 - std::pow(s.beta2, static_cast<double>(s.step));
  param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + s.adam_epsilon);
}

double scheduled_lr(const TrainOptions& opts, double base, long step, long total) {
  if (opts.lr_schedule != "warmup_cosine" || total <= 0) return base;
  const long warmup = std::max(1L, total / 10);
  if (step < warmup) return base * static_cast<double>(step + 1) / static_cast<double>(warmup);
  const double progress = static_cast<double>(step - warmup) / static_cast<double>(std::max(1L, total - warmup));
  return base * 0.5 * (1 + std::cos(std::numbers::pi * progress));
}

}  // namespace

void adam_step(SaliencyHead& head, const SaliencyGrad& grad, TrainState& state, double learning_rate) {
  ++state.step;
  adam_update(head.w_pool, grad.w_pool, state.first.w_pool, state.second.w_pool, state, learning_rate);
  adam_update(head.W1, grad.W1, state.first.W1, state.second.W1, state, learning_rate);
  adam_update(head.W2, grad.W2, state.first.W2, state.second.W2, state, learning_rate);
}

TrainResult train_saliency(const std::vector<TrainingExample>& corpus, SaliencyHead head,
                           const TrainOptions& opts, TrainState state) {
  head.validate();
  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& ex = corpus[i];
    if (ex.features.cols() != head.dim()) throw data_error(ex.video_id + ": feature dimension does not match head");
    if ((ex.labels && ex.mask).any())
      usable.push_back(i);
    else
      spdlog::warn("{}: no valid highlight frame, skipped for saliency training", ex.video_id);
  }

  TrainResult result{head, {}, false};
  Rng rng = make_rng(opts.seed, "train_shuffle");
  const long total_steps = static_cast<long>(usable.size()) * opts.epochs;
  long step = 0;
  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    std::vector<std::size_t> order = usable;
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);

    double epoch_loss = 0;
    for (std::size_t idx : order) {
      const auto& ex = corpus[idx];
      auto [grad, loss] = saliency_grad(head, ex.features, ex.mask, ex.labels);
      const double scaled = opts.lambda * loss;
      if (!std::isfinite(scaled) || !grad.W1.allFinite() || !grad.W2.allFinite() || !grad.w_pool.allFinite()) {
        spdlog::error("saliency training diverged at epoch {} on {}", epoch, ex.video_id);
        result.diverged = true;
        return result;
      }
      grad.w_pool *= opts.lambda;
      grad.W1 *= opts.lambda;
      grad.W2 *= opts.lambda;
      adam_step(head, grad, state, scheduled_lr(opts, state.learning_rate, step++, total_steps));
      if (!head.w_pool.allFinite() || !head.W1.allFinite() || !head.W2.allFinite()) {
        result.diverged = true;
        return result;
      }
      result.head = head;
      epoch_loss += scaled;
    }
    const double mean = usable.empty() ? 0.0 : epoch_loss / static_cast<double>(usable.size());
    result.epoch_losses.push_back(mean);
    spdlog::info("saliency epoch {}: mean loss {:.6f}", epoch, mean);
  }
  return result;
}

std::string encode_head(const SaliencyHead& head) {
  head.validate();
  const std::string header = json{{"D", head.dim()}, {"tau", head.tau}}.dump();
  std::string out;
  binio::put_u32(out, static_cast<std::uint32_t>(header.size()));
  out += header;
  binio::put_f32_rows(out, head.w_pool.transpose());
  binio::put_f32_rows(out, head.W1);
  binio::put_f32_rows(out, head.W2);
  return out;
}

SaliencyHead decode_head(std::string_view bytes) {
  binio::Reader r(bytes);
  const std::uint32_t header_len = r.u32("head header");
  const auto header_text = r.take(header_len, "head header");
  SaliencyHead head;
  Index d = 0;
  try {
    const json h = json::parse(header_text);
    d = h.at("D").get<Index>();
    head.tau = h.at("tau").get<double>();
  } catch (const json::exception& e) {
    throw data_error(std::string("bad head header: ") + e.what());
  }
  if (d < 1 || static_cast<std::size_t>(d) > r.remaining()) throw data_error("bad head dimension");
  const std::size_t body = static_cast<std::size_t>(d + 2 * d * d) * 4;
  if (r.remaining() < body) throw data_error("truncated head payload");
  if (r.remaining() > body) throw data_error("head header/body size mismatch");
  head.w_pool = r.f32_rows(1, d, "head payload").transpose().cast<double>();
  head.W1 = r.f32_rows(d, d, "head payload").cast<double>();
  head.W2 = r.f32_rows(d, d, "head payload").cast<double>();
  head.validate();
  return head;
}

void save_head(const SaliencyHead& head, const std::filesystem::path& path) { write_file(path, encode_head(head)); }

SaliencyHead load_head(const std::filesystem::path& path) { return decode_head(read_file(path)); }

}  // namespace starc
