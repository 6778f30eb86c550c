#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "paneldml/lasso.hpp"
#include "paneldml/nnet.hpp"
#include "paneldml/panel.hpp"
#include "paneldml/riesz.hpp"

namespace paneldml {

struct EstimateOptions {
  Method method = Method::OlsLinear;
  int folds = 5;
  std::vector<double> lambda_grid = default_lambda_grid();
  std::vector<int> width_grid = default_width_grid();
  std::vector<double> kappa_override;  // empty -> quantile formula grid
  int degree = 0;                      // 0 -> schema default
  std::uint64_t seed = 0;
  int jobs = 1;
  std::optional<Direction> direction;  // default chosen by schema
  FistaOptions fista;
  NNetConfig nnet;  // width is driven by the grid
};

struct DebiasedEstimate {
  Method method = Method::OlsLinear;
  double theta = 0;
  double variance = 0;
  double se = 0;
  double plug_in = 0;
  Eigen::VectorXd scores;
  std::vector<int> row_unit;
  double selected_lambda = std::numeric_limits<double>::quiet_NaN();
  int selected_width = 0;
  double selected_kappa = std::numeric_limits<double>::quiet_NaN();
  double test_mse = 0;  // pooled out-of-fold, year effects retuned
  std::uint64_t fold_hash = 0;
  int n_rows = 0;
  int n_units = 0;
  int folds = 0;
  DropReport report;
  std::vector<LinearModel> fold_linear;
  std::vector<NNetModel> fold_nets;
  std::vector<RieszFit> fold_riesz;
};

// V = (1/N) sum_i { sum_t (s_it - theta)^2
//                 + 2 sum_{t<t'} (s_it - sbar_i)(s_it' - sbar_i) }
inline double clustered_variance(const Eigen::VectorXd& scores, const std::vector<int>& row_unit) {
  const auto n = scores.size();
  if (n == 0) return 0;
  const double theta = scores.mean();
  int n_units = 0;
  for (int u : row_unit) n_units = std::max(n_units, u + 1);
  std::vector<std::vector<int>> rows_of(n_units);
  for (Eigen::Index r = 0; r < n; ++r) rows_of[row_unit[r]].push_back(static_cast<int>(r));
  double total = 0;
  for (const auto& rows : rows_of) {
    if (rows.empty()) continue;
    double sbar = 0;
    for (int r : rows) sbar += scores[r];
    sbar /= rows.size();
    for (std::size_t a = 0; a < rows.size(); ++a) {
      double da = scores[rows[a]] - theta;
      total += da * da;
      for (std::size_t b = a + 1; b < rows.size(); ++b)
        total += 2.0 * (scores[rows[a]] - sbar) * (scores[rows[b]] - sbar);
    }
  }
  return total / static_cast<double>(n);
}

inline double average_directional_derivative(const LinearModel& m, const Eigen::MatrixXd& X_raw,
                                             const Direction& dir) {
  return (gradient_in_direction(m.dict, X_raw, dir) * m.beta).mean();
}

inline double average_directional_derivative(const NNetModel& net, const VariableSetSchema& schema,
                                             const Eigen::MatrixXd& X_raw, const Direction& dir) {
  Eigen::MatrixXd G = net.input_gradient(X_raw);
  const auto cols = schema.columns();
  double total = 0;
  for (Eigen::Index i = 0; i < X_raw.rows(); ++i)
    total += G.row(i).dot(dir.weights_for_row(schema, cols, X_raw.row(i)));
  return total / static_cast<double>(X_raw.rows());
}

namespace detail {

// Panel-wide quantities shared by every fold. Demeaning is per unit, so the
// fold split (whole units) never changes it; per-fold standardization reduces
// to a column rescaling of the demeaned raw expansion.
struct Prepared {
  BasisDictionary dict;  // term layout; scale refit per fold
  Direction dir;
  Eigen::MatrixXd Braw;  // raw expansion
  Eigen::MatrixXd Bdd;   // within-transformed expansion
  Eigen::MatrixXd Graw;  // directional gradient of raw terms
  Eigen::MatrixXd Ddd;   // within-transformed year dummies
  YearDesign years;
  Eigen::VectorXd ydd;
  Eigen::VectorXd row_w;
};

inline Prepared prepare(const PanelDataset& panel, const EstimateOptions& opt) {
  Prepared pr;
  pr.dir = opt.direction ? *opt.direction : Direction::for_schema(panel.schema);
  if (opt.method == Method::OlsLinear) {
    pr.dict = identity_dictionary(panel.schema);
  } else {
    int degree = opt.degree > 0 ? opt.degree : default_degree(panel.schema.kind);
    pr.dict = build_dictionary(panel.schema, degree);
  }
  pr.Braw = expand_raw(pr.dict, panel.X);
  pr.Bdd = demean_by_unit(pr.Braw, panel.row_unit, panel.n_units());
  pr.Graw = gradient_raw(pr.dict, panel.X, pr.dir);
  pr.years = year_dummies(panel.row_period);
  pr.Ddd = demean_by_unit(pr.years.D, panel.row_unit, panel.n_units());
  pr.ydd = demean_by_unit(panel.y, panel.row_unit, panel.n_units());
  pr.row_w.resize(panel.n_rows());
  for (int r = 0; r < panel.n_rows(); ++r) pr.row_w[r] = panel.unit_weight[panel.row_unit[r]];
  return pr;
}

// demeaned rows of the standardized dictionary: division by sd only, since
// the per-fold mean cancels under the within transformation
inline Eigen::MatrixXd scale_demeaned(const BasisDictionary& d, const Eigen::MatrixXd& rows) {
  if (d.identity) return rows;
  Eigen::MatrixXd out = rows.array().rowwise() / d.sd.transpose().array();
  for (int t = 0; t < d.n_terms(); ++t)
    if (d.dropped[t]) out.col(t).setZero();
  return out;
}

inline Eigen::MatrixXd take_rows(const Eigen::MatrixXd& M, const std::vector<int>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), M.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = M.row(rows[i]);
  return out;
}

inline Eigen::VectorXd take_rows(const Eigen::VectorXd& v, const std::vector<int>& rows) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) out[static_cast<Eigen::Index>(i)] = v[rows[i]];
  return out;
}

struct FoldRows {
  std::vector<int> train, eval;
};

inline std::vector<FoldRows> fold_rows(const PanelDataset& panel, const FoldAssignment& fa) {
  std::vector<FoldRows> out(fa.k);
  for (int r = 0; r < panel.n_rows(); ++r) {
    int f = fa.fold_of_unit[panel.row_unit[r]];
    for (int l = 0; l < fa.k; ++l)
      (l == f ? out[l].eval : out[l].train).push_back(r);
  }
  return out;
}

// per-fold fixed matrices plus every gamma fit across the hyper grid
struct FoldState {
  BasisDictionary dict;
  Eigen::MatrixXd Bt, Be;  // scaled demeaned expansion, train and eval
  Eigen::MatrixXd Gt, Ge;  // scaled gradient rows
  Eigen::MatrixXd Dt, De;  // demeaned year dummies
  Eigen::VectorXd yt, ye, wt, we;
  Eigen::MatrixXd Xt_raw, Xe_raw;  // raw covariates (network path)
  std::vector<LinearModel> lasso_fits;   // per lambda index
  std::vector<NNetModel> net_fits;       // per width index
  std::vector<RieszFit> riesz_fits;      // per kappa index
  std::vector<double> gamma_mse;         // per grid index, eval-fold mse
  std::vector<double> alpha_loss;        // per kappa index, eval-fold loss
  DropReport drops;
};

}  // namespace detail

inline DebiasedEstimate estimate_panel(const PanelDataset& panel, const EstimateOptions& opt) {
  if (panel.n_rows() == 0) throw data_error("empty panel");
  DebiasedEstimate out;
  out.method = opt.method;
  out.n_rows = panel.n_rows();
  out.n_units = panel.n_units();
  out.row_unit = panel.row_unit;

  detail::Prepared pr = detail::prepare(panel, opt);

  if (!is_cross_fit(opt.method)) {
    BasisDictionary dict = pr.dict;
    DropReport drops;
    fit_scale(dict, pr.Braw, &drops);
    out.report = drops;
    RegressionData td{detail::scale_demeaned(dict, pr.Bdd), pr.Ddd, pr.ydd, pr.row_w};
    LinearModel m = fit_ols(td, dict, pr.years.levels, opt.method);
    Eigen::MatrixXd G = gradient_scaled(dict, pr.Graw);
    out.scores = G * m.beta;
    out.theta = out.scores.mean();
    out.plug_in = out.theta;
    out.variance = clustered_variance(out.scores, out.row_unit);
    out.se = std::sqrt(out.variance / out.n_rows);
    out.test_mse = m.in_sample_mse;
    out.folds = 1;
    out.fold_linear.push_back(std::move(m));
    return out;
  }

  const int k = opt.folds;
  FoldAssignment fa = assign_folds(panel.n_units(), k, opt.seed);
  {
    std::string tag;
    for (int f : fa.fold_of_unit) tag += std::to_string(f) + ",";
    out.fold_hash = fnv1a64(tag);
  }
  out.folds = k;
  auto rows = detail::fold_rows(panel, fa);
  for (int l = 0; l < k; ++l)
    if (rows[l].train.empty() || rows[l].eval.empty())
      throw data_error("fold " + std::to_string(l) + " has an empty side");

  const bool nnet = is_nnet(opt.method);
  const bool debias = is_debiased(opt.method);
  const std::size_t n_gamma = nnet ? opt.width_grid.size() : opt.lambda_grid.size();
  if (n_gamma == 0) throw config_error("empty hyperparameter grid");

  std::vector<double> kappas = opt.kappa_override;
  if (debias && kappas.empty())
    kappas = kappa_grid(panel.n_rows(), panel.n_rows() / k, pr.dict.n_terms());

  std::vector<detail::FoldState> st(k);
  std::vector<std::exception_ptr> fold_err(k);

  // independent (fold x grid) fits; every result lands in its own slot
  parallel_for(static_cast<std::size_t>(k), static_cast<unsigned>(opt.jobs), [&](std::size_t li) {
    const int l = static_cast<int>(li);
    auto& s = st[l];
    try {
      s.dict = pr.dict;
      fit_scale(s.dict, detail::take_rows(pr.Braw, rows[l].train), &s.drops);
      s.Bt = detail::scale_demeaned(s.dict, detail::take_rows(pr.Bdd, rows[l].train));
      s.Be = detail::scale_demeaned(s.dict, detail::take_rows(pr.Bdd, rows[l].eval));
      s.Gt = gradient_scaled(s.dict, detail::take_rows(pr.Graw, rows[l].train));
      s.Ge = gradient_scaled(s.dict, detail::take_rows(pr.Graw, rows[l].eval));
      s.Dt = detail::take_rows(pr.Ddd, rows[l].train);
      s.De = detail::take_rows(pr.Ddd, rows[l].eval);
      s.yt = detail::take_rows(pr.ydd, rows[l].train);
      s.ye = detail::take_rows(pr.ydd, rows[l].eval);
      s.wt = detail::take_rows(pr.row_w, rows[l].train);
      s.we = detail::take_rows(pr.row_w, rows[l].eval);

      // a single failed grid value only disqualifies that value; the trial
      // dies when nothing on a grid certifies
      const double bad = std::numeric_limits<double>::infinity();
      RegressionData td{s.Bt, s.Dt, s.yt, s.wt};
      if (nnet) {
        s.Xt_raw = detail::take_rows(panel.X, rows[l].train);
        s.Xe_raw = detail::take_rows(panel.X, rows[l].eval);
        s.gamma_mse.resize(opt.width_grid.size(), bad);
        s.net_fits.resize(opt.width_grid.size());
        for (std::size_t wi = 0; wi < opt.width_grid.size(); ++wi) {
          NNetConfig cfg = opt.nnet;
          cfg.width = opt.width_grid[wi];
          std::uint64_t net_seed =
              derive_seed(opt.seed, "nnet", static_cast<std::uint64_t>(l) * 64 + wi);
          try {
            NNetModel net = fit_nnet(s.Xt_raw, s.yt, s.Dt, s.wt, pr.years.levels, cfg, net_seed);
            s.gamma_mse[wi] = eval_mse_with_retune(s.ye, net.predict(s.Xe_raw), s.De, s.we);
            s.net_fits[wi] = std::move(net);
          } catch (const numeric_error& e) {
            s.drops.add("width " + std::to_string(cfg.width) + " failed: " + e.what());
          }
        }
      } else {
        LassoWorkspace ws(td);
        s.gamma_mse.resize(opt.lambda_grid.size(), bad);
        s.lasso_fits.resize(opt.lambda_grid.size());
        Eigen::VectorXd warm;
        std::vector<std::size_t> order(opt.lambda_grid.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
          return opt.lambda_grid[a] > opt.lambda_grid[b];
        });
        for (std::size_t oi : order) {
          try {
            LinearModel m = fit_lasso(td, s.dict, pr.years.levels, opt.lambda_grid[oi], opt.fista,
                                      &ws, warm.size() ? &warm : nullptr);
            warm = m.beta;
            s.gamma_mse[oi] = eval_mse_with_retune(s.ye, s.Be * m.beta, s.De, s.we);
            s.lasso_fits[oi] = std::move(m);
          } catch (const numeric_error& e) {
            s.drops.add("lambda " + format_double(opt.lambda_grid[oi]) + " failed: " + e.what());
          }
        }
      }

      if (debias) {
        RieszWorkspace rws(s.Bt, s.Gt);
        s.riesz_fits.resize(kappas.size());
        s.alpha_loss.resize(kappas.size(), bad);
        Eigen::VectorXd warm;
        for (std::size_t ki = 0; ki < kappas.size(); ++ki) {  // grid is descending
          try {
            RieszFit rf = fit_riesz(s.Bt, s.Gt, kappas[ki], opt.fista, &rws,
                                    warm.size() ? &warm : nullptr, &s.drops);
            warm = rf.rho;
            s.alpha_loss[ki] = riesz_loss(rf.rho, s.Be, s.Ge);
            s.riesz_fits[ki] = std::move(rf);
          } catch (const numeric_error& e) {
            s.drops.add("kappa " + format_double(kappas[ki]) + " failed: " + e.what());
          }
        }
      }
    } catch (...) {
      fold_err[l] = std::current_exception();
    }
  });

  for (int l = 0; l < k; ++l) {
    if (!fold_err[l]) continue;
    const std::string at = "fold " + std::to_string(l) + ": ";
    try {
      std::rethrow_exception(fold_err[l]);
    } catch (const config_error& e) {
      throw config_error(at + e.what());
    } catch (const numeric_error& e) {
      throw numeric_error(at + e.what());
    } catch (const data_error& e) {
      throw data_error(at + e.what());
    } catch (const std::exception& e) {
      throw error(at + e.what());
    }
  }
  for (int l = 0; l < k; ++l)
    for (const auto& note : st[l].drops.notes)
      out.report.add("fold " + std::to_string(l) + ": " + note);

  // shared hyperparameter: minimize the summed evaluation-fold loss over the
  // grid values that certified in every fold, ties toward the smaller value
  auto pick = [&](auto loss_of, const auto& grid, const char* what) {
    std::size_t best = grid.size();
    double best_loss = std::numeric_limits<double>::infinity();
    for (std::size_t gi = 0; gi < grid.size(); ++gi) {
      double total = 0;
      for (int l = 0; l < k; ++l) total += loss_of(l, gi);
      if (!std::isfinite(total)) continue;
      if (best == grid.size() || total < best_loss ||
          (total == best_loss && grid[gi] < grid[best])) {
        best_loss = total;
        best = gi;
      }
    }
    if (best == grid.size()) throw numeric_error(std::string("all ") + what + " grid fits failed");
    return best;
  };
  std::size_t gamma_idx;
  if (nnet) {
    gamma_idx =
        pick([&](int l, std::size_t i) { return st[l].gamma_mse[i]; }, opt.width_grid, "width");
    out.selected_width = opt.width_grid[gamma_idx];
  } else {
    gamma_idx =
        pick([&](int l, std::size_t i) { return st[l].gamma_mse[i]; }, opt.lambda_grid, "lambda");
    out.selected_lambda = opt.lambda_grid[gamma_idx];
  }

  std::size_t kappa_idx = 0;
  if (debias) {
    kappa_idx = pick([&](int l, std::size_t i) { return st[l].alpha_loss[i]; }, kappas, "kappa");
    out.selected_kappa = kappas[kappa_idx];
  }

  out.scores.resize(panel.n_rows());
  Eigen::VectorXd plug(panel.n_rows());
  double sse = 0, wsum = 0;
  for (int l = 0; l < k; ++l) {
    const auto& s = st[l];
    Eigen::VectorXd gamma_eval, deriv;
    if (nnet) {
      const NNetModel& net = s.net_fits[gamma_idx];
      gamma_eval = net.predict(s.Xe_raw);
      Eigen::MatrixXd gi = net.input_gradient(s.Xe_raw);
      deriv.resize(gi.rows());
      const auto cols = panel.schema.columns();
      for (Eigen::Index i = 0; i < gi.rows(); ++i)
        deriv[i] = gi.row(i).dot(pr.dir.weights_for_row(panel.schema, cols, s.Xe_raw.row(i)));
      out.fold_nets.push_back(net);
    } else {
      const LinearModel& m = s.lasso_fits[gamma_idx];
      gamma_eval = s.Be * m.beta;
      deriv = s.Ge * m.beta;
      out.fold_linear.push_back(m);
    }
    Eigen::VectorXd resid = s.ye - gamma_eval;
    Eigen::VectorXd corr = Eigen::VectorXd::Zero(resid.size());
    if (debias) {
      const RieszFit& rf = s.riesz_fits[kappa_idx];
      corr = (s.Be * rf.rho).cwiseProduct(resid);
      out.fold_riesz.push_back(rf);
    }
    for (std::size_t i = 0; i < rows[l].eval.size(); ++i) {
      plug[rows[l].eval[i]] = deriv[static_cast<Eigen::Index>(i)];
      out.scores[rows[l].eval[i]] =
          deriv[static_cast<Eigen::Index>(i)] + corr[static_cast<Eigen::Index>(i)];
    }
    // pooled out-of-fold mse with year effects retuned per fold
    Eigen::VectorXd r = resid;
    Eigen::VectorXd delta = retune_year_effects(s.De, r, s.we);
    if (delta.size()) r -= s.De * delta;
    sse += (s.we.array() * r.array().square()).sum();
    wsum += s.we.sum();
  }
  out.plug_in = plug.mean();
  out.theta = out.scores.mean();
  out.variance = clustered_variance(out.scores, out.row_unit);
  out.se = std::sqrt(out.variance / out.n_rows);
  out.test_mse = sse / wsum;
  return out;
}

}  // namespace paneldml
