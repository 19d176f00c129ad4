#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace starc {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Index = Eigen::Index;
using MatrixXd = Matrix<double>;
using VectorXd = Vector<double>;
using MatrixXf = Matrix<float>;

// Per-frame 0/1 indicator (validity mask M, highlight labels H).
using Mask = Eigen::Array<bool, Eigen::Dynamic, 1>;

enum class ErrorKind { Config, Data, Numerical };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline Error config_error(const std::string& what) { return {ErrorKind::Config, what}; }
inline Error data_error(const std::string& what) { return {ErrorKind::Data, what}; }
inline Error numerical_error(const std::string& what) { return {ErrorKind::Numerical, what}; }

// CLI exit code for an error kind.
inline int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config: return 2;
    case ErrorKind::Data: return 3;
    case ErrorKind::Numerical: return 4;
  }
  return 1;
}

inline Mask prefix_mask(Index size, Index valid_len) {
  Mask m = Mask::Constant(size, false);
  m.head(valid_len).setConstant(true);
  return m;
}

// Length of the valid prefix; throws if the mask is not of the form 1..10..0.
inline Index valid_prefix_length(const Mask& mask) {
  const Index n = mask.count();
  if (!mask.head(n).all()) throw data_error("mask is not a contiguous valid prefix");
  return n;
}

// Named random substreams: every consumer derives its own seed from the run
// seed, a stage name and (optionally) a video id, so adding videos never
// perturbs the streams of other videos.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t substream_seed(std::uint64_t seed, std::string_view stage,
                                    std::string_view video_id = {}) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  auto mix = [&h](std::string_view s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    h ^= 0xff;
    h *= 0x100000001b3ULL;
  };
  mix(stage);
  mix(video_id);
  return splitmix64(seed ^ splitmix64(h));
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed, std::string_view stage, std::string_view video_id = {}) {
  return Rng(substream_seed(seed, stage, video_id));
}

// Uniform integer in [0, n) straight from the engine output, so shuffles do
// not depend on the standard library's distribution implementation.
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
  const std::uint64_t limit = Rng::max() - Rng::max() % n;
  std::uint64_t r;
  do {
    r = rng();
  } while (r >= limit);
  return r % n;
}

template <typename Scalar = double>
Matrix<Scalar> gaussian_matrix(Index rows, Index cols, Scalar sigma, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix<Scalar> out(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) out(i, j) = static_cast<Scalar>(sigma * normal(rng));
  return out;
}

}  // namespace starc
