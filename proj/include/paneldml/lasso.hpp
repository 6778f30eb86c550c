#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "paneldml/learners.hpp"

namespace paneldml {

// min_x  x'Gx - 2c'x + y2 + sum_j pen_j |x_j|
// in residual form: G = A'A, c = A'y, y2 = ||y||^2, so the primal is
// ||y - Ax||^2 + penalty and the scaled residual u = 2s(y - Ax) is dual
// feasible once s caps every |A_j'u| at pen_j. All gap quantities reduce to
// Gram expressions; A itself is never needed.
//
// The gap is certified relative to max(primal, y2): y2 is the primal at
// x = 0, so the tolerance is anchored to the data scale even when the
// optimum fits the data nearly exactly and the optimal primal is tiny.
struct QuadLasso {
  Eigen::MatrixXd G;
  Eigen::VectorXd c;
  double y2 = 0;
  double lipschitz = 0;  // 2 lambda_max(G); computed on demand if 0
};

struct FistaOptions {
  double rel_gap_tol = 1e-8;
  int max_iter = 200000;
  int check_every = 25;
  int polish_every = 500;  // active-set stationarity solve cadence; 0 disables
};

struct FistaResult {
  Eigen::VectorXd x;
  int iterations = 0;
  double rel_gap = 0;
  bool converged = false;
};

namespace detail {

inline double lmax_estimate(const Eigen::MatrixXd& G) {
  const int p = static_cast<int>(G.cols());
  if (p == 0) return 1.0;
  Eigen::VectorXd v = Eigen::VectorXd::Ones(p) / std::sqrt(static_cast<double>(p));
  double lam = 1.0;
  for (int k = 0; k < 60; ++k) {
    Eigen::VectorXd w = G.selfadjointView<Eigen::Lower>() * v;
    double n = w.norm();
    if (n == 0) return 1.0;
    lam = n;
    v = w / n;
  }
  return lam * 1.01;  // small head-room keeps the step a valid majorizer
}

// duality gap at x; pen must be strictly positive elsewhere than unconstrained dims
inline double duality_gap(const QuadLasso& P, const Eigen::VectorXd& pen,
                          const Eigen::VectorXd& x, const Eigen::VectorXd& Gx) {
  const Eigen::VectorXd grad_half = Gx - P.c;  // (1/2) gradient of the smooth part
  double s = 1.0;
  for (int j = 0; j < x.size(); ++j) {
    double a = 2.0 * std::abs(grad_half[j]);
    if (a > pen[j]) s = std::min(s, pen[j] / a);
  }
  // P - D at the dual point u = 2s(y - Ax), with y2 substituted out:
  //   gap = (1-s)^2 rTr + pen'|x| + 2s x'(Gx - c).
  // The y2-scale cancellation only enters through rTr and is damped by
  // (1-s)^2, which vanishes as the iterate approaches stationarity.
  double rTr = P.y2 - 2.0 * P.c.dot(x) + x.dot(Gx);
  return (1.0 - s) * (1.0 - s) * rTr + pen.dot(x.cwiseAbs()) + 2.0 * s * x.dot(grad_half);
}

// Stationarity solve on the working support (nonzeros plus KKT violators):
// FISTA pins the support long before the coefficients settle, and the
// restricted linear system lands on the exact optimum in one shot. The result
// only replaces x when its certified gap improves, so correctness never
// depends on the heuristic.
inline bool polish_active_set(const QuadLasso& P, const Eigen::VectorXd& pen, Eigen::VectorXd& x,
                              double& best_rel, double rel_gap_tol) {
  const int p = static_cast<int>(P.G.cols());
  bool improved = false;
  for (int round = 0; round < 3; ++round) {
    Eigen::VectorXd gh = P.G.selfadjointView<Eigen::Lower>() * x - P.c;
    std::vector<int> act;
    std::vector<double> sgn;
    for (int j = 0; j < p; ++j) {
      if (x[j] != 0.0) {
        act.push_back(j);
        sgn.push_back(x[j] > 0 ? 1.0 : -1.0);
      } else if (2.0 * std::abs(gh[j]) > pen[j]) {
        act.push_back(j);
        sgn.push_back(gh[j] < 0 ? 1.0 : -1.0);
      }
    }
    if (act.empty()) break;
    const int a = static_cast<int>(act.size());
    Eigen::MatrixXd Ga(a, a);
    Eigen::VectorXd rhs(a);
    for (int i = 0; i < a; ++i) {
      for (int j = 0; j < a; ++j)
        Ga(i, j) = act[i] >= act[j] ? P.G(act[i], act[j]) : P.G(act[j], act[i]);
      rhs[i] = P.c[act[i]] - 0.5 * pen[act[i]] * sgn[i];
    }
    Eigen::VectorXd za = Ga.ldlt().solve(rhs);
    Eigen::VectorXd cand = Eigen::VectorXd::Zero(p);
    for (int i = 0; i < a; ++i) cand[act[i]] = za[i];
    Eigen::VectorXd Gc = P.G.selfadjointView<Eigen::Lower>() * cand;
    double gap = duality_gap(P, pen, cand, Gc);
    double primal = cand.dot(Gc) - 2.0 * P.c.dot(cand) + P.y2 + pen.dot(cand.cwiseAbs());
    double rel = gap / std::max({primal, P.y2, 1e-300});
    if (!std::isfinite(rel) || rel >= best_rel) break;
    x = cand;
    best_rel = rel;
    improved = true;
    if (rel <= rel_gap_tol) break;
  }
  return improved;
}

}  // namespace detail

// FISTA with gradient-based adaptive restart; stops on a certified relative
// duality gap. Every polish_every iterations the working support is solved
// exactly, which collapses the long tail on ill-conditioned designs.
inline FistaResult fista_lasso(QuadLasso& P, const Eigen::VectorXd& pen,
                               const FistaOptions& opt = {},
                               const Eigen::VectorXd* warm = nullptr) {
  const int p = static_cast<int>(P.G.cols());
  FistaResult res;
  if (p == 0) {
    res.converged = true;
    return res;
  }
  if (P.lipschitz <= 0) P.lipschitz = 2.0 * detail::lmax_estimate(P.G);
  const double step = 1.0 / P.lipschitz;
  Eigen::VectorXd x = warm && warm->size() == p ? *warm : Eigen::VectorXd::Zero(p);
  Eigen::VectorXd z = x, x_prev = x;
  double t = 1.0;
  std::uint64_t failed_sig = 0;  // support signature of the last failed polish
  for (int it = 1; it <= opt.max_iter; ++it) {
    Eigen::VectorXd Gz = P.G.selfadjointView<Eigen::Lower>() * z;
    Eigen::VectorXd v = z - 2.0 * step * (Gz - P.c);
    x_prev.swap(x);
    for (int j = 0; j < p; ++j) {
      double th = step * pen[j];
      double vj = v[j];
      x[j] = vj > th ? vj - th : vj < -th ? vj + th : 0.0;
    }
    if ((z - x).dot(x - x_prev) > 0) {  // restart the momentum
      t = 1.0;
      z = x;
    } else {
      double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
      z = x + ((t - 1.0) / t_next) * (x - x_prev);
      t = t_next;
    }
    const bool check = it % opt.check_every == 0 || it == opt.max_iter;
    const bool polish = opt.polish_every > 0 && it % opt.polish_every == 0;
    if (check || polish) {
      Eigen::VectorXd Gx = P.G.selfadjointView<Eigen::Lower>() * x;
      double gap = detail::duality_gap(P, pen, x, Gx);
      double primal = x.dot(Gx) - 2.0 * P.c.dot(x) + P.y2 + pen.dot(x.cwiseAbs());
      double rel = gap / std::max({primal, P.y2, 1e-300});
      res.iterations = it;
      res.rel_gap = rel;
      if (rel <= opt.rel_gap_tol) {
        res.converged = true;
        break;
      }
      if (polish) {
        // Mid-run the candidate only counts when it certifies outright;
        // partial improvements would keep resetting the momentum and can trap
        // the iteration in a cycle. Identical supports are not re-solved.
        std::uint64_t sig = 1469598103934665603ull;
        for (int j = 0; j < p; ++j) {
          unsigned char s = x[j] > 0   ? 1
                            : x[j] < 0 ? 2
                            : 2.0 * std::abs(Gx[j] - P.c[j]) > pen[j] ? 3
                                                                      : 0;
          sig = (sig ^ s) * 1099511628211ull;
        }
        if (sig != failed_sig) {
          Eigen::VectorXd cand = x;
          double cand_rel = rel;
          detail::polish_active_set(P, pen, cand, cand_rel, opt.rel_gap_tol);
          if (cand_rel <= opt.rel_gap_tol) {
            x = std::move(cand);
            res.rel_gap = cand_rel;
            res.converged = true;
            break;
          }
          failed_sig = sig;
        }
      }
    }
  }
  if (!res.converged) {
    detail::polish_active_set(P, pen, x, res.rel_gap, opt.rel_gap_tol);
    res.converged = res.rel_gap <= opt.rel_gap_tol;
  }
  res.x = std::move(x);
  return res;
}

// Shared per-fold precomputation for a lasso grid: the year dummies are
// unpenalized, so they are projected out once (Frisch-Waugh) and the reduced
// Gram matrix is reused across every lambda.
struct LassoWorkspace {
  Eigen::MatrixXd Bw;        // weighted basis rows
  Eigen::VectorXd yw;
  Eigen::MatrixXd Dw;
  Eigen::HouseholderQR<Eigen::MatrixXd> dqr;  // QR of Dw
  Eigen::MatrixXd Bt;        // projected basis
  Eigen::VectorXd yt;        // projected outcome
  QuadLasso quad;
  bool has_dummies = false;

  LassoWorkspace(const RegressionData& td) {
    Eigen::ArrayXd sw = td.w.array().sqrt();
    Bw = td.B.array().colwise() * sw;
    yw = td.y.array() * sw;
    Bt = Bw;
    yt = yw;
    if (td.D.cols() > 0) {
      has_dummies = true;
      Dw = td.D.array().colwise() * sw;
      dqr = Eigen::HouseholderQR<Eigen::MatrixXd>(Dw);
      Eigen::MatrixXd Q = dqr.householderQ() * Eigen::MatrixXd::Identity(Dw.rows(), Dw.cols());
      Bt.noalias() -= Q * (Q.transpose() * Bw);
      yt.noalias() -= Q * (Q.transpose() * yw);
    }
    const int p = static_cast<int>(Bt.cols());
    quad.G.resize(p, p);
    quad.G.setZero();
    quad.G.selfadjointView<Eigen::Lower>().rankUpdate(Bt.transpose());
    quad.c.noalias() = Bt.transpose() * yt;
    quad.y2 = yt.squaredNorm();
  }

  Eigen::VectorXd recover_year_coef(const Eigen::VectorXd& beta) const {
    if (!has_dummies) return Eigen::VectorXd();
    return dqr.solve(yw - Bw * beta);
  }
};

// Weighted lasso with unpenalized year dummies:
//   sum_i w_i (y_i - b_i'beta - d_i'delta)^2 + lambda |beta|_1
// lambda = 0 solves the projected least squares directly.
inline LinearModel fit_lasso(const RegressionData& td, const BasisDictionary& dict,
                             const std::vector<std::string>& year_levels, double lambda,
                             const FistaOptions& opt = {}, LassoWorkspace* ws = nullptr,
                             const Eigen::VectorXd* warm = nullptr) {
  if (lambda < 0) throw config_error("lambda must be nonnegative");
  std::optional<LassoWorkspace> local;
  if (!ws) {
    local.emplace(td);
    ws = &*local;
  }
  const int p = static_cast<int>(td.B.cols());
  LinearModel m;
  m.method = Method::Lasso;
  m.dict = dict;
  m.year_levels = year_levels;
  m.lambda = lambda;

  if (lambda == 0) {
    auto sol = solve_ols(ws->Bt, ws->yt);
    m.beta = sol.coef;
    for (int j : sol.dropped) m.dropped_columns.push_back(dict.term_name(j));
    m.iterations = 0;
    m.converged = true;
  } else {
    Eigen::VectorXd pen = Eigen::VectorXd::Constant(p, lambda);
    auto r = fista_lasso(ws->quad, pen, opt, warm);
    if (!r.converged) {
      // retry once with a vanishing ridge; non-uniqueness can stall the gap
      QuadLasso ridged = ws->quad;
      ridged.G.diagonal().array() += 1e-20;
      ridged.lipschitz = ws->quad.lipschitz;
      r = fista_lasso(ridged, pen, opt, &r.x);
      if (!r.converged)
        throw numeric_error("lasso solver failed to certify optimality after " +
                            std::to_string(opt.max_iter) + " iterations (relative gap " +
                            format_double(r.rel_gap) + ")");
    }
    m.beta = r.x;
    m.iterations = r.iterations;
    m.converged = true;
  }
  m.year_coef = ws->recover_year_coef(m.beta);
  Eigen::VectorXd resid = td.y - td.B * m.beta;
  if (td.D.cols() > 0) resid -= td.D * m.year_coef;
  m.in_sample_mse = weighted_mse(resid, td.w);
  return m;
}

inline std::vector<double> default_lambda_grid() {
  std::vector<double> g(15);
  for (int i = 0; i < 15; ++i) g[i] = std::pow(10.0, -10.0 + 10.0 * i / 14.0);
  return g;
}

}  // namespace paneldml
