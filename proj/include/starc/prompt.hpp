#pragma once

// Saliency prompts and the decoder input sequence [X'; S; R; Y].

#include "starc/common.hpp"

#include <array>
#include <cstdint>
#include <filesystem>

namespace starc {

struct SaliencyPrompt {
  VectorXd w_map;
  VectorXd b_map;
};

// w_map ~ N(0, 1/D), b_map = 0.
SaliencyPrompt init_saliency_prompt(Index dim, std::uint64_t seed);

/// Row n = P_s,n * w_map + b_map.
template <typename DerivedP>
MatrixXd project_saliency(const Eigen::MatrixBase<DerivedP>& scores, const SaliencyPrompt& map) {
  if (map.w_map.size() != map.b_map.size()) throw data_error("project_saliency: w_map/b_map size mismatch");
  if (!scores.allFinite()) throw numerical_error("project_saliency: non-finite score");
  MatrixXd out = scores.template cast<double>() * map.w_map.transpose();
  out.rowwise() += map.b_map.transpose();
  return out;
}

struct DecoderInput {
  MatrixXd sequence;
  std::array<Index, 4> offsets{};  // starts of X', S, R, Y
  std::array<Index, 4> lengths{};

  auto section(int i) const { return sequence.middleRows(offsets[static_cast<std::size_t>(i)], lengths[static_cast<std::size_t>(i)]); }
};

DecoderInput assemble_input(const MatrixXd& refined, const MatrixXd& prompts, const MatrixXd& retrieval,
                            const MatrixXd& text);

enum class CorruptionMode { Zero, Gaussian };

struct PromptCorruption {
  CorruptionMode mode = CorruptionMode::Zero;
  double sigma = 0;
};

MatrixXd corrupt_prompt(const MatrixXd& prompts, const PromptCorruption& how, std::uint64_t seed);

// STIN: magic, u64 rows, u64 D, four u64 section offsets, four u64 section
// lengths, then rows * D little-endian f32 values, row-major.
std::string encode_decoder_input(const DecoderInput& in);
DecoderInput decode_decoder_input(std::string_view bytes);

}  // namespace starc
