#pragma once

// Saliency-aware fused unbalanced Gromov-Wasserstein transport between the
// valid frames of a video and K anchors.

#include "starc/common.hpp"

#include <cmath>
#include <string>
#include <utility>
#include <vector>

namespace starc {

struct AnchorSet {
  MatrixXd anchors;  // K x D
  Index size() const { return anchors.rows(); }
};

struct OtProblem {
  MatrixXd C_k;    // F_v x K
  MatrixXd C_v;    // F_v x F_v
  MatrixXd C_a;    // K x K
  VectorXd p_hat;  // F_v, sums to 1
  VectorXd q;      // K, uniform 1/K
  double alpha = 0.5;
  double gamma = 0.3;
  double epsilon = 0.1;

  Index frames() const { return C_k.rows(); }
  Index anchors() const { return C_k.cols(); }
  void validate() const;
};

struct SolverOptions {
  int max_outer_iter = 200;
  int max_inner_iter = 100;
  double plan_tol = 1e-7;
};

struct TransportPlan {
  MatrixXd T;  // F_v x K, nonnegative
  std::vector<double> objective_trace;
  int iterations = 0;
  bool converged = false;
};

/// C^k_nj = (1 - cos(x_n, a_j)) - mu * p_s,n with the raw sigmoid prior.
template <typename DerivedX, typename DerivedA, typename DerivedP>
Matrix<typename DerivedX::Scalar> build_kot_cost(const Eigen::MatrixBase<DerivedX>& xs,
                                                 const Eigen::MatrixBase<DerivedA>& anchors,
                                                 const Eigen::MatrixBase<DerivedP>& prior,
                                                 typename DerivedX::Scalar mu) {
  using Scalar = typename DerivedX::Scalar;
  if (xs.cols() != anchors.cols()) throw data_error("build_kot_cost: feature/anchor dimension mismatch");
  if (prior.size() != xs.rows()) throw data_error("build_kot_cost: prior length mismatch");
  const Vector<Scalar> xn = xs.rowwise().norm();
  const Vector<Scalar> an = anchors.rowwise().norm();
  if ((xn.array() == Scalar(0)).any()) throw data_error("build_kot_cost: zero-norm frame feature");
  if ((an.array() == Scalar(0)).any()) throw data_error("build_kot_cost: zero-norm anchor");
  Matrix<Scalar> cosine = (xs * anchors.transpose()).array().colwise() / xn.array();
  cosine.array().rowwise() /= an.transpose().array();
  Matrix<Scalar> cost = (Scalar(1) - cosine.array()).matrix();
  cost.array().colwise() -= mu * prior.array();
  return cost;
}

/// C_v[n,m] = |n - m| / max(F_v - 1, 1); C_a[j,k] = [j != k].
template <typename Scalar = double>
std::pair<Matrix<Scalar>, Matrix<Scalar>> build_structure_costs(Index frames, Index anchors) {
  if (frames < 1 || anchors < 1) throw data_error("build_structure_costs: sizes must be >= 1");
  const Scalar denom = static_cast<Scalar>(std::max<Index>(frames - 1, 1));
  Matrix<Scalar> cv(frames, frames);
  for (Index n = 0; n < frames; ++n)
    for (Index m = 0; m < frames; ++m) cv(n, m) = static_cast<Scalar>(std::abs(n - m)) / denom;
  Matrix<Scalar> ca = Matrix<Scalar>::Ones(anchors, anchors);
  ca.diagonal().setZero();
  return {std::move(cv), std::move(ca)};
}

/// GW objective sum_{n,m,j,k} (C_v[n,m] - C_a[j,k])^2 T[n,j] T[m,k], via
/// r' C_v^2 r + c' C_a^2 c - 2 <C_v T C_a', T> with r, c the plan marginals.
template <typename Scalar>
Scalar gw_objective(const Matrix<Scalar>& T, const Matrix<Scalar>& cv, const Matrix<Scalar>& ca) {
  const Vector<Scalar> r = T.rowwise().sum();
  const Vector<Scalar> c = T.colwise().sum().transpose();
  const Matrix<Scalar> cv2 = cv.array().square().matrix();
  const Matrix<Scalar> ca2 = ca.array().square().matrix();
  return r.dot(cv2 * r) + c.dot(ca2 * c) - Scalar(2) * (cv * T * ca.transpose()).cwiseProduct(T).sum();
}

/// Gradient of gw_objective with respect to T.
template <typename Scalar>
Matrix<Scalar> gw_gradient(const Matrix<Scalar>& T, const Matrix<Scalar>& cv, const Matrix<Scalar>& ca) {
  if (cv.rows() != T.rows() || cv.cols() != T.rows() || ca.rows() != T.cols() || ca.cols() != T.cols())
    throw data_error("gw_gradient: shape mismatch");
  const Vector<Scalar> r = T.rowwise().sum();
  const Vector<Scalar> c = T.colwise().sum().transpose();
  const Matrix<Scalar> cv2 = cv.array().square().matrix();
  const Matrix<Scalar> ca2 = ca.array().square().matrix();
  const Vector<Scalar> row_term = (cv2 + cv2.transpose()) * r;
  const Vector<Scalar> col_term = (ca2 + ca2.transpose()) * c;
  Matrix<Scalar> grad = Scalar(-2) * (cv * T * ca.transpose() + cv.transpose() * T * ca);
  grad.colwise() += row_term;
  grad.rowwise() += col_term.transpose();
  return grad;
}

/// Generalized KL(a || b) = sum a log(a/b) - a + b, with 0 log 0 = 0.
double kl_divergence(const VectorXd& a, const VectorXd& b);

/// alpha * GW + (1 - alpha) * <C_k, T> + gamma * KL(T 1_K || p_hat).
double fused_objective(const OtProblem& prob, const MatrixXd& T);

/// Outer linearization of the GW term around the current plan, inner
/// log-domain entropic scaling (exact anchor marginal, KL-relaxed frame
/// marginal with exponent gamma / (gamma + epsilon)), and a step along the
/// segment to the inner solution chosen so the fused objective never
/// increases.
TransportPlan solve_fugw(const OtProblem& prob, const SolverOptions& opts = {});

/// Farthest-point sampling of K anchors from the rows of xs under cosine
/// distance; the first row is drawn from the seeded stream.
AnchorSet farthest_point_anchors(const MatrixXd& xs, Index k, std::uint64_t seed, const std::string& video_id);

/// Assembles the problem on valid frames: raw prior for the cost bias and
/// its L1 normalization as the KL reference.
OtProblem make_ot_problem(const MatrixXd& xs, const AnchorSet& anchors, const VectorXd& prior, double mu,
                          double alpha, double gamma, double epsilon);

std::string plan_to_json(const TransportPlan& plan);

}  // namespace starc
