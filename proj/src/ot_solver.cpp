#include "starc/ot.hpp"

#include <json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <limits>

namespace starc {

void OtProblem::validate() const {
  const Index f = frames();
  const Index k = anchors();
  if (f < 1 || k < 1) throw data_error("ot problem: empty cost matrix");
  if (C_v.rows() != f || C_v.cols() != f) throw data_error("ot problem: C_v shape mismatch");
  if (C_a.rows() != k || C_a.cols() != k) throw data_error("ot problem: C_a shape mismatch");
  if (p_hat.size() != f || q.size() != k) throw data_error("ot problem: marginal length mismatch");
  if (std::abs(p_hat.sum() - 1) > 1e-9 || (p_hat.array() < 0).any())
    throw data_error("ot problem: p_hat must be a probability vector");
  if (std::abs(q.sum() - 1) > 1e-9 || (q.array() <= 0).any())
    throw data_error("ot problem: q must be a positive probability vector");
  if (!(epsilon > 0)) throw config_error("ot problem: epsilon must be > 0");
  if (!(gamma >= 0)) throw config_error("ot problem: gamma must be >= 0");
  if (!(alpha >= 0 && alpha <= 1)) throw config_error("ot problem: alpha must lie in [0, 1]");
  if (!C_k.allFinite() || !C_v.allFinite() || !C_a.allFinite()) throw data_error("ot problem: non-finite cost");
}

double kl_divergence(const VectorXd& a, const VectorXd& b) {
  double kl = 0;
  for (Index i = 0; i < a.size(); ++i) {
    if (a(i) > 0) kl += a(i) * std::log(a(i) / b(i));
    kl += b(i) - a(i);
  }
  return kl;
}

double fused_objective(const OtProblem& prob, const MatrixXd& T) {
  double value = (1 - prob.alpha) * prob.C_k.cwiseProduct(T).sum();
  if (prob.alpha > 0) value += prob.alpha * gw_objective(T, prob.C_v, prob.C_a);
  if (prob.gamma > 0) value += prob.gamma * kl_divergence(T.rowwise().sum(), prob.p_hat);
  return value;
}

namespace {

// Log-domain scaling iterations for
//   min <C, T> + gamma KL(T 1 || p_hat) + eps KL(T || a q'),  T' 1 = q,
// with a uniform. Potentials are warm-started across outer iterations.
class EntropicScaler {
 public:
  EntropicScaler(const OtProblem& prob, int max_iter)
      : prob_(prob),
        max_iter_(max_iter),
        log_p_(prob.p_hat.array().max(std::numeric_limits<double>::min()).log().matrix()),
        log_q_(prob.q.array().log().matrix()),
        row_pot_(VectorXd::Zero(prob.frames())),
        col_pot_(VectorXd::Zero(prob.anchors())) {}

  MatrixXd solve(const MatrixXd& cost) {
    const Index f = prob_.frames();
    const Index k = prob_.anchors();
    const double eps = prob_.epsilon;
    const double kappa = prob_.gamma / (prob_.gamma + eps);
    const double log_a = -std::log(static_cast<double>(f));

    MatrixXd log_kernel = -cost / eps;
    log_kernel.array() += log_a;
    log_kernel.rowwise() += log_q_.transpose();

    MatrixXd work(f, k);
    for (int it = 0; it < max_iter_; ++it) {
      const VectorXd prev_row = row_pot_;
      if (kappa > 0) {
        work = log_kernel;
        work.rowwise() += col_pot_.transpose();
        row_pot_ = kappa * (log_p_ - row_lse(work));
      } else {
        row_pot_.setZero();
      }
      work = log_kernel;
      work.colwise() += row_pot_;
      col_pot_ = log_q_ - col_lse(work);
      if (!row_pot_.allFinite() || !col_pot_.allFinite())
        throw numerical_error("solve_fugw: non-finite scaling potential (epsilon " + std::to_string(eps) +
                              ", gamma " + std::to_string(prob_.gamma) + ")");
      if ((row_pot_ - prev_row).cwiseAbs().maxCoeff() < 1e-12) break;
    }
    work = log_kernel;
    work.colwise() += row_pot_;
    work.rowwise() += col_pot_.transpose();
    return work.array().exp().matrix();
  }

 private:
  static VectorXd row_lse(const MatrixXd& m) {
    const VectorXd top = m.rowwise().maxCoeff();
    return top.array() + ((m.colwise() - top).array().exp().rowwise().sum()).log();
  }

  static VectorXd col_lse(const MatrixXd& m) {
    const VectorXd top = m.colwise().maxCoeff().transpose();
    return top.array() + ((m.rowwise() - top.transpose()).array().exp().colwise().sum()).log().transpose();
  }

  const OtProblem& prob_;
  int max_iter_;
  VectorXd log_p_;
  VectorXd log_q_;
  VectorXd row_pot_;
  VectorXd col_pot_;
};

// Minimizes h(theta) = objective(T + theta * D) over [0, 1] by golden-section
// search; returns the best evaluated point, theta = 0 included.
std::pair<double, double> line_search(const OtProblem& prob, const MatrixXd& T, const MatrixXd& dir,
                                      double value_at_zero) {
  auto h = [&](double theta) { return fused_objective(prob, T + theta * dir); };
  const double inv_phi = (std::sqrt(5.0) - 1) / 2;
  double lo = 0, hi = 1;
  double x1 = hi - inv_phi * (hi - lo), x2 = lo + inv_phi * (hi - lo);
  double f1 = h(x1), f2 = h(x2);
  double best_theta = 0, best_value = value_at_zero;
  auto consider = [&](double theta, double value) {
    if (value < best_value) {
      best_value = value;
      best_theta = theta;
    }
  };
  consider(x1, f1);
  consider(x2, f2);
  for (int it = 0; it < 60 && hi - lo > 1e-10; ++it) {
    if (f1 <= f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - inv_phi * (hi - lo);
      f1 = h(x1);
      consider(x1, f1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + inv_phi * (hi - lo);
      f2 = h(x2);
      consider(x2, f2);
    }
  }
  return {best_theta, best_value};
}

}  // namespace

TransportPlan solve_fugw(const OtProblem& prob, const SolverOptions& opts) {
  prob.validate();
  EntropicScaler scaler(prob, opts.max_inner_iter);

  TransportPlan plan;
  plan.T = prob.p_hat * prob.q.transpose();
  double value = fused_objective(prob, plan.T);
  plan.objective_trace.push_back(value);

  for (int outer = 0; outer < opts.max_outer_iter; ++outer) {
    MatrixXd cost = (1 - prob.alpha) * prob.C_k;
    if (prob.alpha > 0) cost += prob.alpha * gw_gradient(plan.T, prob.C_v, prob.C_a);

    const MatrixXd candidate = scaler.solve(cost);
    const double candidate_value = fused_objective(prob, candidate);
    MatrixXd next;
    double next_value;
    if (candidate_value <= value) {
      next = candidate;
      next_value = candidate_value;
    } else {
      const MatrixXd dir = candidate - plan.T;
      const auto [theta, v] = line_search(prob, plan.T, dir, value);
      next = plan.T + theta * dir;
      next_value = v;
    }
    if (!next.allFinite()) throw numerical_error("solve_fugw: non-finite plan");

    const double change = (next - plan.T).cwiseAbs().sum();
    plan.T = std::move(next);
    value = next_value;
    plan.objective_trace.push_back(value);
    plan.iterations = outer + 1;
    if (change < opts.plan_tol) {
      plan.converged = true;
      break;
    }
  }
  if (!plan.converged)
    spdlog::debug("solve_fugw: no convergence after {} outer iterations", plan.iterations);
  return plan;
}

AnchorSet farthest_point_anchors(const MatrixXd& xs, Index k, std::uint64_t seed, const std::string& video_id) {
  if (xs.rows() < 1) throw data_error("farthest_point_anchors: no frames");
  if (k < 1) throw config_error("farthest_point_anchors: K must be >= 1");
  const VectorXd norms = xs.rowwise().norm();
  if ((norms.array() == 0).any()) throw data_error("farthest_point_anchors: zero-norm frame feature");
  const MatrixXd unit = xs.array().colwise() / norms.array();

  Rng rng = make_rng(seed, "anchors", video_id);
  std::vector<Index> chosen{static_cast<Index>(uniform_index(rng, static_cast<std::uint64_t>(xs.rows())))};
  VectorXd dist = (1.0 - (unit * unit.row(chosen[0]).transpose()).array()).matrix();
  while (static_cast<Index>(chosen.size()) < k) {
    Index next = 0;
    dist.maxCoeff(&next);  // first maximum on ties
    chosen.push_back(next);
    dist = dist.cwiseMin((1.0 - (unit * unit.row(next).transpose()).array()).matrix());
  }
  AnchorSet out;
  out.anchors.resize(k, xs.cols());
  for (Index j = 0; j < k; ++j) out.anchors.row(j) = xs.row(chosen[static_cast<std::size_t>(j)]);
  return out;
}

OtProblem make_ot_problem(const MatrixXd& xs, const AnchorSet& anchors, const VectorXd& prior, double mu,
                          double alpha, double gamma, double epsilon) {
  if (prior.size() != xs.rows()) throw data_error("make_ot_problem: prior length mismatch");
  if (!(prior.sum() > 0)) throw data_error("make_ot_problem: prior has zero mass");
  OtProblem prob;
  prob.C_k = build_kot_cost(xs, anchors.anchors, prior, mu);
  std::tie(prob.C_v, prob.C_a) = build_structure_costs<double>(xs.rows(), anchors.size());
  prob.p_hat = prior / prior.sum();
  prob.q = VectorXd::Constant(anchors.size(), 1.0 / static_cast<double>(anchors.size()));
  prob.alpha = alpha;
  prob.gamma = gamma;
  prob.epsilon = epsilon;
  return prob;
}

std::string plan_to_json(const TransportPlan& plan) {
  nlohmann::json values = nlohmann::json::array();
  for (Index n = 0; n < plan.T.rows(); ++n)
    for (Index j = 0; j < plan.T.cols(); ++j) values.push_back(plan.T(n, j));
  nlohmann::json j = {{"F_v", plan.T.rows()},
                      {"K", plan.T.cols()},
                      {"iterations", plan.iterations},
                      {"converged", plan.converged},
                      {"T", values}};
  return j.dump();
}

}  // namespace starc
