#include "starc/prompt.hpp"

#include "starc/binary_io.hpp"

#include <cmath>

namespace starc {

namespace {
constexpr std::string_view kStinMagic = "STIN";
}

SaliencyPrompt init_saliency_prompt(Index dim, std::uint64_t seed) {
  if (dim < 1) throw config_error("prompt dimension must be >= 1");
  Rng rng = make_rng(seed, "saliency_prompt");
  SaliencyPrompt map;
  map.w_map = gaussian_matrix(dim, 1, 1.0 / std::sqrt(static_cast<double>(dim)), rng);
  map.b_map = VectorXd::Zero(dim);
  return map;
}

DecoderInput assemble_input(const MatrixXd& refined, const MatrixXd& prompts, const MatrixXd& retrieval,
                            const MatrixXd& text) {
  const Index d = refined.cols();
  // Empty sections carry no width information.
  auto check = [d](const MatrixXd& m, const char* name) {
    if (m.rows() > 0 && m.cols() != d) throw data_error(std::string("assemble_input: width mismatch in ") + name);
  };
  check(prompts, "S");
  check(retrieval, "R");
  check(text, "Y");

  DecoderInput out;
  out.lengths = {refined.rows(), prompts.rows(), retrieval.rows(), text.rows()};
  Index offset = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    out.offsets[i] = offset;
    offset += out.lengths[i];
  }
  out.sequence.resize(offset, d);
  const MatrixXd* parts[] = {&refined, &prompts, &retrieval, &text};
  for (std::size_t i = 0; i < 4; ++i)
    if (out.lengths[i] > 0) out.sequence.middleRows(out.offsets[i], out.lengths[i]) = *parts[i];
  return out;
}

MatrixXd corrupt_prompt(const MatrixXd& prompts, const PromptCorruption& how, std::uint64_t seed) {
  switch (how.mode) {
    case CorruptionMode::Zero:
      return MatrixXd::Zero(prompts.rows(), prompts.cols());
    case CorruptionMode::Gaussian: {
      if (!(how.sigma >= 0)) throw config_error("corrupt_prompt: sigma must be >= 0");
      if (how.sigma == 0) return prompts;
      Rng rng = make_rng(seed, "prompt_noise");
      return prompts + gaussian_matrix(prompts.rows(), prompts.cols(), how.sigma, rng);
    }
  }
  throw config_error("corrupt_prompt: unknown mode");
}

std::string encode_decoder_input(const DecoderInput& in) {
  std::string out(kStinMagic);
  binio::put_u64(out, static_cast<std::uint64_t>(in.sequence.rows()));
  binio::put_u64(out, static_cast<std::uint64_t>(in.sequence.cols()));
  for (auto o : in.offsets) binio::put_u64(out, static_cast<std::uint64_t>(o));
  for (auto l : in.lengths) binio::put_u64(out, static_cast<std::uint64_t>(l));
  binio::put_f32_rows(out, in.sequence);
  return out;
}

DecoderInput decode_decoder_input(std::string_view bytes) {
  binio::Reader r(bytes);
  if (r.take(4, "STIN header") != kStinMagic) throw data_error("bad magic, expected STIN");
  const auto rows = static_cast<Index>(r.u64("STIN header"));
  const auto cols = static_cast<Index>(r.u64("STIN header"));
  DecoderInput in;
  for (auto& o : in.offsets) o = static_cast<Index>(r.u64("STIN header"));
  for (auto& l : in.lengths) l = static_cast<Index>(r.u64("STIN header"));
  Index expect = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    if (in.offsets[i] != expect) throw data_error("STIN: inconsistent section offsets");
    expect += in.lengths[i];
  }
  if (expect != rows) throw data_error("STIN: section lengths do not sum to row count");
  if (rows < 0 || cols < 0 || (cols > 0 && static_cast<std::size_t>(rows) > r.remaining() / 4 / static_cast<std::size_t>(cols)))
    throw data_error("truncated STIN body");
  in.sequence = r.f32_rows(rows, cols, "STIN body").cast<double>();
  if (r.remaining() != 0) throw data_error("STIN: header/body size mismatch");
  return in;
}

}  // namespace starc
