#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include "paneldml/common.hpp"
#include "paneldml/dictionary.hpp"
#include "paneldml/panel.hpp"

namespace paneldml {

enum class Method { OlsLinear, OlsPoly, Lasso, LassoDml, NNet, NNetDml };

inline std::string method_name(Method m) {
  switch (m) {
    case Method::OlsLinear: return "ols_linear";
    case Method::OlsPoly: return "ols_poly";
    case Method::Lasso: return "lasso";
    case Method::LassoDml: return "lasso_dml";
    case Method::NNet: return "nnet";
    case Method::NNetDml: return "nnet_dml";
  }
  return "?";
}

inline Method parse_method(const std::string& s) {
  for (Method m : {Method::OlsLinear, Method::OlsPoly, Method::Lasso, Method::LassoDml,
                   Method::NNet, Method::NNetDml})
    if (method_name(m) == s) return m;
  throw config_error("unknown method: " + s);
}

inline bool is_debiased(Method m) { return m == Method::LassoDml || m == Method::NNetDml; }
inline bool is_nnet(Method m) { return m == Method::NNet || m == Method::NNetDml; }
inline bool is_cross_fit(Method m) { return m != Method::OlsLinear && m != Method::OlsPoly; }

// Year fixed effects as dummies with the first (sorted) level as base.
struct YearDesign {
  std::vector<std::string> levels;  // sorted; levels[0] is the base
  Eigen::MatrixXd D;                // n x (levels - 1)
};

inline YearDesign year_dummies(const std::vector<std::string>& periods) {
  YearDesign yd;
  yd.levels = periods;
  std::sort(yd.levels.begin(), yd.levels.end());
  yd.levels.erase(std::unique(yd.levels.begin(), yd.levels.end()), yd.levels.end());
  const int q = static_cast<int>(yd.levels.size()) - 1;
  yd.D = Eigen::MatrixXd::Zero(periods.size(), std::max(q, 0));
  for (std::size_t i = 0; i < periods.size(); ++i) {
    auto it = std::lower_bound(yd.levels.begin(), yd.levels.end(), periods[i]);
    int idx = static_cast<int>(it - yd.levels.begin());
    if (idx > 0) yd.D(static_cast<int>(i), idx - 1) = 1.0;
  }
  return yd;
}

struct OlsSolution {
  Eigen::VectorXd coef;      // full length; dropped columns get 0
  std::vector<int> dropped;  // collinear columns removed before solving
  double mse = 0;            // in-sample
};

// Least squares with collinear columns dropped via rank-revealing QR. Throws
// if nothing identifiable remains.
inline OlsSolution solve_ols(const Eigen::MatrixXd& A, const Eigen::VectorXd& y) {
  const int p = static_cast<int>(A.cols());
  OlsSolution out;
  out.coef = Eigen::VectorXd::Zero(p);
  if (p == 0) {
    out.mse = y.squaredNorm() / std::max<int>(1, static_cast<int>(y.size()));
    return out;
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
  qr.setThreshold(1e-10);
  const int rank = static_cast<int>(qr.rank());
  if (rank == 0) throw numeric_error("design matrix has rank zero");
  const auto& perm = qr.colsPermutation().indices();
  std::vector<int> keep(perm.data(), perm.data() + rank);
  std::sort(keep.begin(), keep.end());
  for (int j = 0; j < p; ++j)
    if (!std::binary_search(keep.begin(), keep.end(), j)) out.dropped.push_back(j);
  Eigen::MatrixXd Ak(A.rows(), rank);
  for (int j = 0; j < rank; ++j) Ak.col(j) = A.col(keep[j]);
  Eigen::VectorXd bk = Ak.householderQr().solve(y);
  for (int j = 0; j < rank; ++j) out.coef[keep[j]] = bk[j];
  out.mse = (y - A * out.coef).squaredNorm() / A.rows();
  return out;
}

// Linear-in-dictionary fit: OLS or lasso coefficients over standardized,
// within-transformed terms plus unpenalized year effects.
struct LinearModel {
  Method method = Method::OlsLinear;
  BasisDictionary dict;
  Eigen::VectorXd beta;              // per dictionary term
  std::vector<std::string> year_levels;
  Eigen::VectorXd year_coef;         // per non-base level, training fit
  double lambda = 0;
  double in_sample_mse = 0;
  int iterations = 0;
  bool converged = true;
  std::vector<std::string> dropped_columns;
};

// Training inputs: everything already within-transformed. B is the
// standardized demeaned dictionary, D the demeaned year dummies, w per-row
// weights (unit weights spread over rows).
struct RegressionData {
  Eigen::MatrixXd B;
  Eigen::MatrixXd D;
  Eigen::VectorXd y;
  Eigen::VectorXd w;
};

inline double weighted_mse(const Eigen::VectorXd& resid, const Eigen::VectorXd& w) {
  if (resid.size() == 0) return 0;
  return (w.array() * resid.array().square()).sum() / w.sum();
}

inline LinearModel fit_ols(const RegressionData& td, const BasisDictionary& dict,
                           const std::vector<std::string>& year_levels, Method method) {
  const int p = static_cast<int>(td.B.cols());
  const int q = static_cast<int>(td.D.cols());
  Eigen::MatrixXd A(td.B.rows(), p + q);
  A << td.B, td.D;
  Eigen::ArrayXd sw = td.w.array().sqrt();
  Eigen::MatrixXd Aw = A.array().colwise() * sw;
  Eigen::VectorXd yw = td.y.array() * sw;
  auto sol = solve_ols(Aw, yw);
  LinearModel m;
  m.method = method;
  m.dict = dict;
  m.beta = sol.coef.head(p);
  m.year_coef = sol.coef.tail(q);
  m.year_levels = year_levels;
  m.lambda = 0;
  m.in_sample_mse = weighted_mse(td.y - A * sol.coef, td.w);
  for (int j : sol.dropped)
    m.dropped_columns.push_back(j < p ? dict.term_name(j) : "year:" + year_levels[j - p + 1]);
  return m;
}

// Re-estimates year effects on an evaluation set, holding gamma fixed.
// Changes reported MSE only; scores never use the retuned effects.
inline Eigen::VectorXd retune_year_effects(const Eigen::MatrixXd& D_eval,
                                           const Eigen::VectorXd& resid,
                                           const Eigen::VectorXd& w) {
  if (D_eval.cols() == 0) return Eigen::VectorXd();
  Eigen::ArrayXd sw = w.array().sqrt();
  Eigen::MatrixXd Dw = D_eval.array().colwise() * sw;
  Eigen::VectorXd rw = resid.array() * sw;
  return solve_ols(Dw, rw).coef;
}

inline double eval_mse_with_retune(const Eigen::VectorXd& y_eval,
                                   const Eigen::VectorXd& gamma_eval,
                                   const Eigen::MatrixXd& D_eval,
                                   const Eigen::VectorXd& w) {
  Eigen::VectorXd r = y_eval - gamma_eval;
  Eigen::VectorXd delta = retune_year_effects(D_eval, r, w);
  if (delta.size()) r -= D_eval * delta;
  return weighted_mse(r, w);
}

}  // namespace paneldml
