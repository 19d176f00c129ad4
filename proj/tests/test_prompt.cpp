#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "starc/prompt.hpp"

using namespace starc;

TEST_CASE("saliency projection") {
  SaliencyPrompt map{Eigen::Vector2d(1, -2), Eigen::Vector2d(0.5, 0)};
  const MatrixXd s = project_saliency(Eigen::Vector3d(0, 1, 0.25), map);
  MatrixXd expect(3, 2);
  expect << 0.5, 0, 1.5, -2, 0.75, -0.5;
  CHECK((s - expect).cwiseAbs().maxCoeff() < 1e-15);

  // Affine in the score.
  Rng rng = make_rng(0, "affine");
  const auto init = init_saliency_prompt(6, 3);
  CHECK(init.b_map.isZero(0));
  for (int inst = 0; inst < 50; ++inst) {
    const VectorXd a = gaussian_matrix(4, 1, 1.0, rng).col(0);
    const VectorXd b = gaussian_matrix(4, 1, 1.0, rng).col(0);
    const double t = 0.3;
    const MatrixXd mixed = project_saliency(VectorXd(t * a + (1 - t) * b), init);
    const MatrixXd sep = t * project_saliency(a, init) + (1 - t) * project_saliency(b, init);
    CHECK((mixed - sep).cwiseAbs().maxCoeff() < 1e-12);
  }

  CHECK_THROWS_AS(project_saliency(Eigen::Vector2d(0, std::nan("")), map), Error);
  CHECK_THROWS_AS(project_saliency(Eigen::Vector2d(0, 1), SaliencyPrompt{Eigen::Vector2d(1, 1), Eigen::Vector3d(0, 0, 0)}),
                  Error);
  CHECK(init_saliency_prompt(6, 3).w_map == init.w_map);
}

TEST_CASE("assembly layout") {
  const MatrixXd x = MatrixXd::Constant(2, 3, 1), s = MatrixXd::Constant(2, 3, 2), r = MatrixXd::Constant(1, 3, 3),
                 y = MatrixXd::Constant(4, 3, 4);
  const auto in = assemble_input(x, s, r, y);
  CHECK(in.offsets == std::array<Index, 4>{0, 2, 4, 5});
  CHECK(in.lengths == std::array<Index, 4>{2, 2, 1, 4});
  CHECK(in.sequence.rows() == 9);
  CHECK(in.section(0) == x);
  CHECK(in.section(1) == s);
  CHECK(in.section(2) == r);
  CHECK(in.section(3) == y);

  const auto no_text = assemble_input(x, s, r, MatrixXd(0, 0));
  CHECK(no_text.sequence.rows() == 5);
  CHECK(no_text.lengths[3] == 0);

  CHECK_THROWS_AS(assemble_input(x, MatrixXd::Ones(2, 2), r, y), Error);
  CHECK_THROWS_AS(assemble_input(x, s, r, MatrixXd::Ones(1, 4)), Error);
}

TEST_CASE("every row belongs to exactly one section") {
  Rng rng = make_rng(1, "sections");
  for (int inst = 0; inst < 50; ++inst) {
    std::array<Index, 4> len{};
    for (auto& l : len) l = static_cast<Index>(uniform_index(rng, 6));
    MatrixXd parts[4];
    for (int i = 0; i < 4; ++i) parts[i] = MatrixXd::Constant(len[static_cast<std::size_t>(i)], 2, i);
    const auto in = assemble_input(parts[0], parts[1], parts[2], parts[3]);
    std::vector<int> owner(static_cast<std::size_t>(in.sequence.rows()), 0);
    for (int i = 0; i < 4; ++i)
      for (Index n = 0; n < in.lengths[static_cast<std::size_t>(i)]; ++n)
        ++owner[static_cast<std::size_t>(in.offsets[static_cast<std::size_t>(i)] + n)];
    CHECK(std::all_of(owner.begin(), owner.end(), [](int c) { return c == 1; }));
    for (int i = 0; i < 4; ++i) CHECK(in.section(i) == parts[i]);
  }
}

TEST_CASE("prompt corruption") {
  Rng rng = make_rng(2, "corrupt");
  const MatrixXd s = gaussian_matrix(5, 4, 1.0, rng);
  CHECK(corrupt_prompt(s, {CorruptionMode::Zero, 0}, 1).isZero(0));
  CHECK(corrupt_prompt(s, {CorruptionMode::Gaussian, 0}, 1) == s);
  const MatrixXd a = corrupt_prompt(s, {CorruptionMode::Gaussian, 0.5}, 7);
  CHECK(a == corrupt_prompt(s, {CorruptionMode::Gaussian, 0.5}, 7));
  CHECK_FALSE(a == corrupt_prompt(s, {CorruptionMode::Gaussian, 0.5}, 8));
  CHECK_FALSE(a == s);
  CHECK_THROWS_AS(corrupt_prompt(s, {CorruptionMode::Gaussian, -1}, 1), Error);

  const MatrixXd big = MatrixXd::Zero(200, 50);
  const MatrixXd noise = corrupt_prompt(big, {CorruptionMode::Gaussian, 2.0}, 3);
  const double sd = std::sqrt(noise.squaredNorm() / static_cast<double>(noise.size()));
  CHECK(std::abs(sd - 2.0) < 0.05);
}

TEST_CASE("STIN round trip") {
  Rng rng = make_rng(3, "stin");
  const MatrixXd x = gaussian_matrix(4, 3, 1.0, rng).cast<float>().cast<double>();
  const MatrixXd s = gaussian_matrix(4, 3, 1.0, rng).cast<float>().cast<double>();
  const MatrixXd r = gaussian_matrix(2, 3, 1.0, rng).cast<float>().cast<double>();
  const auto in = assemble_input(x, s, r, MatrixXd(0, 3));
  const auto bytes = encode_decoder_input(in);
  CHECK(bytes.size() == 4 + 10 * 8 + 10 * 3 * 4);
  const auto back = decode_decoder_input(bytes);
  CHECK(back.sequence == in.sequence);
  CHECK(back.offsets == in.offsets);
  CHECK(back.lengths == in.lengths);
  CHECK(encode_decoder_input(back) == bytes);

  CHECK_THROWS_AS(decode_decoder_input(bytes.substr(0, bytes.size() - 1)), Error);
  CHECK_THROWS_AS(decode_decoder_input("XTIN" + bytes.substr(4)), Error);
  std::string bad = bytes;
  bad[4 + 2 * 8 + 8] ^= 1;  // S offset
  CHECK_THROWS_AS(decode_decoder_input(bad), Error);
}
