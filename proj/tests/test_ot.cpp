#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "oracles.hpp"

#include "starc/ot.hpp"

#include <json.hpp>

using namespace starc;

namespace {

OtProblem random_problem(Index F, Index K, std::uint64_t seed, double alpha, double gamma) {
  Rng rng = make_rng(seed, "test_ot");
  const MatrixXd xs = gaussian_matrix(F, 6, 1.0, rng);
  const auto anchors = farthest_point_anchors(xs, K, seed, "v");
  VectorXd prior(F);
  for (Index n = 0; n < F; ++n) prior(n) = 0.1 + 0.8 * static_cast<double>(uniform_index(rng, 100)) / 100;
  return make_ot_problem(xs, anchors, prior, 0.1, alpha, gamma, 0.1);
}

}  // namespace

TEST_CASE("cost matrix examples") {
  MatrixXd x(1, 2), a(1, 2);
  x << 1, 2;
  a << 2, 4;
  CHECK(std::abs(build_kot_cost(x, a, VectorXd::Zero(1), 0.1)(0, 0)) < 1e-15);
  CHECK(std::abs(build_kot_cost(x, a, VectorXd::Ones(1), 0.1)(0, 0) + 0.1) < 1e-15);
  MatrixXd o(1, 2);
  o << -2, 1;
  CHECK(std::abs(build_kot_cost(x, o, VectorXd::Constant(1, 0.5), 0.2)(0, 0) - 0.9) < 1e-15);
  CHECK_THROWS_AS(build_kot_cost(MatrixXd::Zero(1, 2), a, VectorXd::Zero(1), 0.1), Error);
}

TEST_CASE("raising mu lowers each row by mu * prior") {
  Rng rng = make_rng(1, "mu");
  const MatrixXd x = gaussian_matrix(7, 4, 1.0, rng);
  const MatrixXd a = gaussian_matrix(3, 4, 1.0, rng);
  VectorXd p(7);
  p << 0, 0.1, 0.2, 0.5, 0.7, 0.9, 1;
  const MatrixXd lo = build_kot_cost(x, a, p, 0.1);
  const MatrixXd hi = build_kot_cost(x, a, p, 0.4);
  for (Index n = 0; n < 7; ++n)
    for (Index j = 0; j < 3; ++j) {
      CHECK(std::abs((lo(n, j) - hi(n, j)) - 0.3 * p(n)) < 1e-15);
      if (p(n) > 0) CHECK(hi(n, j) < lo(n, j));
    }
}

TEST_CASE("structure costs") {
  const auto [cv, ca] = build_structure_costs(3, 2);
  MatrixXd ecv(3, 3), eca(2, 2);
  ecv << 0, .5, 1, .5, 0, .5, 1, .5, 0;
  eca << 0, 1, 1, 0;
  CHECK(cv == ecv);
  CHECK(ca == eca);
  CHECK(build_structure_costs(1, 1).first == MatrixXd::Zero(1, 1));
}

TEST_CASE("GW value and gradient") {
  const auto [cv, ca] = build_structure_costs(2, 2);
  CHECK(gw_gradient<double>(MatrixXd::Zero(2, 2), cv, ca).isZero(0));
  const MatrixXd uniform = MatrixXd::Constant(2, 2, 0.25);
  CHECK((gw_gradient(uniform, cv, ca) - oracle::gw_grad(uniform, cv, ca)).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(std::abs(gw_objective(uniform, cv, ca) - oracle::gw_value(uniform, cv, ca)) < 1e-10);

  // Finite differences of the value agree with the gradient.
  Rng rng = make_rng(2, "gw_fd");
  for (int inst = 0; inst < 10; ++inst) {
    const MatrixXd T = gaussian_matrix(5, 3, 1.0, rng).cwiseAbs();
    const auto [v, a] = build_structure_costs(5, 3);
    const MatrixXd g = gw_gradient(T, v, a);
    for (Index i = 0; i < T.size(); ++i) {
      MatrixXd up = T, dn = T;
      up.data()[i] += 1e-6;
      dn.data()[i] -= 1e-6;
      CHECK(std::abs((gw_objective(up, v, a) - gw_objective(dn, v, a)) / 2e-6 - g.data()[i]) < 1e-6);
    }
  }
}

TEST_CASE("KL divergence") {
  const Eigen::Vector3d a(0.2, 0.3, 0.5);
  CHECK(kl_divergence(a, a) == 0);
  CHECK(kl_divergence(Eigen::Vector2d(0, 1), Eigen::Vector2d(0.5, 0.5)) == doctest::Approx(std::log(2.0)));
  CHECK(kl_divergence(Eigen::Vector2d(1, 1), Eigen::Vector2d(0.5, 0.5)) == doctest::Approx(2 * std::log(2.0) - 1));
}

TEST_CASE("zero cost with uniform marginals gives the uniform plan") {
  OtProblem prob;
  prob.C_k = MatrixXd::Zero(5, 3);
  std::tie(prob.C_v, prob.C_a) = build_structure_costs(5, 3);
  prob.p_hat = VectorXd::Constant(5, 0.2);
  prob.q = VectorXd::Constant(3, 1.0 / 3);
  prob.alpha = 0;
  prob.gamma = 1e6;
  prob.epsilon = 0.1;
  const auto plan = solve_fugw(prob);
  CHECK((plan.T.array() - 1.0 / 15).abs().maxCoeff() < 1e-9);
  CHECK(plan.converged);
}

TEST_CASE("balanced oracle") {
  for (int inst = 0; inst < 10; ++inst) {
    Rng rng = make_rng(inst, "balanced");
    OtProblem prob;
    prob.C_k = gaussian_matrix(6, 2, 1.0, rng).cwiseAbs();
    std::tie(prob.C_v, prob.C_a) = build_structure_costs(6, 2);
    prob.p_hat = VectorXd::Constant(6, 1.0 / 6);
    prob.q = VectorXd::Constant(2, 0.5);
    prob.alpha = 0;
    prob.gamma = 1e6;
    prob.epsilon = 1e-3;
    const auto plan = solve_fugw(prob, {200, 1000, 1e-10});
    const double best = oracle::best_half_assignment(prob.C_k);
    CHECK(prob.C_k.cwiseProduct(plan.T).sum() <= best * 1.02);
    CHECK((plan.T.rowwise().sum().array() - 1.0 / 6).abs().maxCoeff() < 1e-4);
  }
}

TEST_CASE("solver invariants") {
  for (std::uint64_t seed = 0; seed < 8; ++seed)
    for (double alpha : {0.0, 0.5, 1.0}) {
      const auto prob = random_problem(30, 5, seed, alpha, 0.3);
      const auto plan = solve_fugw(prob);
      CHECK((plan.T.array() >= 0).all());
      CHECK((plan.T.colwise().sum().transpose() - prob.q).cwiseAbs().maxCoeff() < 1e-6);
      CHECK(std::abs(plan.T.sum() - 1) < 1e-6);
      for (std::size_t i = 1; i < plan.objective_trace.size(); ++i)
        CHECK(plan.objective_trace[i] <= plan.objective_trace[i - 1] + 1e-9);
      CHECK(plan.objective_trace.back() == doctest::Approx(fused_objective(prob, plan.T)).epsilon(1e-12));
      const auto again = solve_fugw(prob);
      CHECK(again.T == plan.T);
    }
}

TEST_CASE("gamma controls the pull toward the prior") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    double prev = std::numeric_limits<double>::infinity();
    for (double gamma : {0.0, 0.3, 3.0, 30.0}) {
      const auto prob = random_problem(25, 4, seed, 0.5, gamma);
      const auto plan = solve_fugw(prob);
      const double kl = kl_divergence(plan.T.rowwise().sum(), prob.p_hat);
      CHECK(kl <= prev + 1e-12);
      prev = kl;
      CHECK((plan.T.colwise().sum().transpose() - prob.q).cwiseAbs().maxCoeff() < 1e-6);
    }
  }
  // Without the KL term rows are free: mass drifts away from the prior.
  const auto free = solve_fugw(random_problem(25, 4, 3, 0.0, 0.0));
  const auto held = random_problem(25, 4, 3, 0.0, 30.0);
  CHECK(kl_divergence(free.T.rowwise().sum(), held.p_hat) >
        kl_divergence(solve_fugw(held).T.rowwise().sum(), held.p_hat));
}

TEST_CASE("problem validation") {
  auto prob = random_problem(10, 3, 0, 0.5, 0.3);
  CHECK_NOTHROW(prob.validate());
  auto bad = prob;
  bad.alpha = 1.5;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = prob;
  bad.epsilon = 0;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = prob;
  bad.q(0) += 0.1;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = prob;
  bad.C_k(0, 0) = std::nan("");
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("farthest point anchors") {
  Rng rng = make_rng(5, "fps");
  const MatrixXd xs = gaussian_matrix(40, 8, 1.0, rng);
  const auto a = farthest_point_anchors(xs, 6, 1, "vid");
  CHECK(a.size() == 6);
  CHECK(a.anchors == farthest_point_anchors(xs, 6, 1, "vid").anchors);
  for (Index i = 0; i < a.size(); ++i) {
    bool found = false;
    for (Index n = 0; n < xs.rows(); ++n) found = found || xs.row(n) == a.anchors.row(i);
    CHECK(found);
    for (Index j = 0; j < i; ++j) CHECK_FALSE(a.anchors.row(i) == a.anchors.row(j));
  }
  CHECK(farthest_point_anchors(xs.topRows(3), 8, 1, "vid").size() == 8);
}

TEST_CASE("problem assembly and plan dump") {
  Rng rng = make_rng(6, "assembly");
  const MatrixXd xs = gaussian_matrix(12, 4, 1.0, rng);
  const auto anchors = farthest_point_anchors(xs, 3, 0, "v");
  const VectorXd prior = VectorXd::LinSpaced(12, 0.1, 0.9);
  const auto prob = make_ot_problem(xs, anchors, prior, 0.1, 0.5, 0.3, 0.1);
  CHECK(std::abs(prob.p_hat.sum() - 1) < 1e-15);
  CHECK((prob.p_hat - prior / prior.sum()).cwiseAbs().maxCoeff() < 1e-15);
  CHECK((prob.q.array() - 1.0 / 3).abs().maxCoeff() == 0);
  const auto plan = solve_fugw(prob);
  const auto j = nlohmann::json::parse(plan_to_json(plan));
  CHECK(j.at("F_v") == 12);
  CHECK(j.at("K") == 3);
  CHECK(j.at("T").size() == 36);
}
