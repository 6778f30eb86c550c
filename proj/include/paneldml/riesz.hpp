#pragma once

#include <Eigen/Dense>
#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <vector>

#include "paneldml/lasso.hpp"

namespace paneldml {

// kappa = c * (N - N_l)^{-1/2} * Phi^{-1}(1 - .05/p), c descending
inline std::vector<double> kappa_grid(std::size_t n_total, std::size_t n_left_out, int p) {
  if (p < 1) throw config_error("kappa grid needs at least one dictionary term");
  if (n_total <= n_left_out) throw config_error("kappa grid needs N > N_l");
  boost::math::normal_distribution<double> gauss;
  double quant = boost::math::quantile(gauss, 1.0 - 0.05 / p);
  double base = quant / std::sqrt(static_cast<double>(n_total - n_left_out));
  std::vector<double> grid;
  for (double c : {5.0 / 4.0, 1.0, 3.0 / 4.0, 5.0 / 8.0, 9.0 / 16.0, 1.0 / 2.0})
    grid.push_back(c * base);
  return grid;
}

struct RieszFit {
  Eigen::VectorXd rho;
  double kappa = 0;
  Eigen::VectorXd weights;          // per-term penalty rescaling, mean 1
  int weight_iterations = 0;
  std::vector<double> loss_trace;   // objective after each reweighted solve
  int iterations = 0;               // proximal gradient steps in total
  bool jittered = false;
};

// mean over rows of -2 m_i' rho + (b_i' rho)^2
inline double riesz_loss(const Eigen::VectorXd& rho, const Eigen::MatrixXd& B,
                         const Eigen::MatrixXd& M) {
  if (B.rows() == 0) return 0;
  double quad = (B * rho).squaredNorm() / B.rows();
  double lin = (M * rho).sum() / M.rows();
  return -2.0 * lin + quad;
}

// Shared per-fold quantities for a kappa grid: the second-moment matrix, the
// mean gradient, and the residual-form reformulation used by the certified
// solver. A vanishing ridge makes the quadratic strictly convex so a
// consistent residual problem exists even when the moment matrix is singular.
struct RieszWorkspace {
  static constexpr double ridge = 1e-12;
  Eigen::MatrixXd Sigma;  // B'B / n
  Eigen::VectorXd Mbar;   // column means of the gradient rows
  double n = 0;
  QuadLasso quad;

  RieszWorkspace(const Eigen::MatrixXd& B, const Eigen::MatrixXd& Mrows) {
    n = static_cast<double>(B.rows());
    const int p = static_cast<int>(B.cols());
    Sigma.setZero(p, p);
    Sigma.selfadjointView<Eigen::Lower>().rankUpdate(B.transpose(), 1.0 / n);
    Sigma.triangularView<Eigen::Upper>() = Sigma.transpose();
    Mbar = Mrows.colwise().mean().transpose();
    quad.G = n * Sigma;
    quad.G.diagonal().array() += n * ridge;
    quad.c = n * Mbar;
    Eigen::LLT<Eigen::MatrixXd> llt(quad.G);
    quad.y2 = quad.c.dot(llt.solve(quad.c));
  }
};

// argmin_rho  -2 Mbar' rho + rho' Sigma rho + kappa sum_j psi_j |rho_j|
// kappa = 0 solves the normal equations directly; kappa > 0 runs the
// certified solver with inverse-variance penalty rescaling iterated to a
// fixed point.
inline RieszFit fit_riesz(const Eigen::MatrixXd& B, const Eigen::MatrixXd& Mrows, double kappa,
                          const FistaOptions& opt = {}, RieszWorkspace* ws = nullptr,
                          const Eigen::VectorXd* warm = nullptr, DropReport* report = nullptr) {
  if (kappa < 0) throw config_error("kappa must be nonnegative");
  std::optional<RieszWorkspace> local;
  if (!ws) {
    local.emplace(B, Mrows);
    ws = &*local;
  }
  const int p = static_cast<int>(B.cols());
  RieszFit fit;
  fit.kappa = kappa;
  fit.weights = Eigen::VectorXd::Ones(p);

  if (kappa == 0) {
    Eigen::LLT<Eigen::MatrixXd> llt(ws->Sigma);
    if (llt.info() == Eigen::Success) {
      fit.rho = llt.solve(ws->Mbar);
    } else {
      Eigen::MatrixXd jittered = ws->Sigma;
      jittered.diagonal().array() += 1e-12;
      Eigen::LLT<Eigen::MatrixXd> retry(jittered);
      if (retry.info() != Eigen::Success)
        throw numeric_error("second-moment matrix is not positive definite even after jitter");
      fit.rho = retry.solve(ws->Mbar);
      fit.jittered = true;
      if (report) report->add("riesz: moment matrix jittered by 1e-12 for the direct solve");
    }
    fit.loss_trace.push_back(riesz_loss(fit.rho, B, Mrows));
    return fit;
  }

  Eigen::VectorXd rho = warm && warm->size() == p ? *warm : Eigen::VectorXd::Zero(p);
  Eigen::VectorXd psi = fit.weights;
  for (int pass = 1; pass <= 10; ++pass) {
    Eigen::VectorXd pen = (ws->n * kappa) * psi;
    auto sol = fista_lasso(ws->quad, pen, opt, &rho);
    if (!sol.converged)
      throw numeric_error("riesz solver failed to certify optimality (relative gap " +
                          format_double(sol.rel_gap) + ")");
    rho = sol.x;
    fit.iterations += sol.iterations;
    fit.weight_iterations = pass;
    fit.loss_trace.push_back(riesz_loss(rho, B, Mrows) + kappa * psi.dot(rho.cwiseAbs()));

    // residual of each term's moment condition, row by row
    Eigen::VectorXd alpha = B * rho;
    Eigen::VectorXd next(p);
    for (int j = 0; j < p; ++j) {
      Eigen::ArrayXd g = Mrows.col(j).array() - B.col(j).array() * alpha.array();
      double mean = g.mean();
      double var = (g - mean).square().mean();
      next[j] = 1.0 / std::max(var, 1e-12);
    }
    next *= p / next.sum();  // normalize to mean one
    next = next.cwiseMax(1e-6).cwiseMin(1e6);
    double delta = ((next - psi).cwiseAbs().array() / psi.cwiseAbs().array().max(1e-12)).maxCoeff();
    psi = next;
    if (delta < 1e-4) break;
  }
  fit.weights = psi;
  fit.rho = rho;
  return fit;
}

}  // namespace paneldml
