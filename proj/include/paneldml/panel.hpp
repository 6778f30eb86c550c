#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "paneldml/common.hpp"
#include "paneldml/rng.hpp"
#include "paneldml/weather.hpp"

namespace paneldml {

struct YieldRecord {
  std::string unit_id;
  int year = 0;
  double yield = 0;
  double area = 1;
};

// Rows are grouped by unit and sorted by (unit, period). y holds the log
// outcome. unit_weight is per unit (default 1).
struct PanelDataset {
  VariableSetSchema schema;
  std::vector<std::string> unit_ids;   // distinct units, sorted
  std::vector<int> row_unit;           // per row, index into unit_ids
  std::vector<std::string> row_period; // per row
  Eigen::VectorXd y;
  Eigen::MatrixXd X;                   // raw covariates, schema order
  std::vector<std::string> covariate_names;
  Eigen::VectorXd unit_weight;

  int n_rows() const { return static_cast<int>(y.size()); }
  int n_units() const { return static_cast<int>(unit_ids.size()); }

  std::vector<int> unit_row_counts() const {
    std::vector<int> t(n_units(), 0);
    for (int u : row_unit) t[u]++;
    return t;
  }
};

// Subtracts each unit's mean from its rows. Idempotent; annihilates per-unit
// constants exactly.
inline Eigen::MatrixXd demean_by_unit(const Eigen::MatrixXd& M, const std::vector<int>& row_unit,
                                      int n_units) {
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(n_units, M.cols());
  Eigen::VectorXd cnt = Eigen::VectorXd::Zero(n_units);
  for (int i = 0; i < M.rows(); ++i) {
    sum.row(row_unit[i]) += M.row(i);
    cnt[row_unit[i]] += 1;
  }
  Eigen::MatrixXd out(M.rows(), M.cols());
  for (int i = 0; i < M.rows(); ++i) out.row(i) = M.row(i) - sum.row(row_unit[i]) / cnt[row_unit[i]];
  return out;
}

inline Eigen::VectorXd demean_by_unit(const Eigen::VectorXd& v, const std::vector<int>& row_unit,
                                      int n_units) {
  Eigen::MatrixXd m = v;
  return demean_by_unit(m, row_unit, n_units).col(0);
}

// Drops units with fewer than two periods; the within transform needs T >= 2.
inline PanelDataset drop_short_units(const PanelDataset& p, DropReport* report = nullptr) {
  auto counts = p.unit_row_counts();
  std::vector<int> keep_unit(p.n_units(), -1);
  PanelDataset out;
  out.schema = p.schema;
  out.covariate_names = p.covariate_names;
  int nu = 0;
  for (int u = 0; u < p.n_units(); ++u) {
    if (counts[u] >= 2) {
      keep_unit[u] = nu++;
      out.unit_ids.push_back(p.unit_ids[u]);
    } else if (report) {
      report->add("dropped unit " + p.unit_ids[u] + ": " + std::to_string(counts[u]) +
                  " period(s), need 2");
    }
  }
  if (nu == p.n_units()) return p;
  std::vector<int> rows;
  for (int i = 0; i < p.n_rows(); ++i)
    if (keep_unit[p.row_unit[i]] >= 0) rows.push_back(i);
  out.y.resize(rows.size());
  out.X.resize(rows.size(), p.X.cols());
  out.unit_weight.resize(nu);
  for (int u = 0; u < p.n_units(); ++u)
    if (keep_unit[u] >= 0) out.unit_weight[keep_unit[u]] = p.unit_weight[u];
  for (std::size_t k = 0; k < rows.size(); ++k) {
    int i = rows[k];
    out.row_unit.push_back(keep_unit[p.row_unit[i]]);
    out.row_period.push_back(p.row_period[i]);
    out.y[k] = p.y[i];
    out.X.row(k) = p.X.row(i);
  }
  return out;
}

namespace detail {
inline PanelDataset assemble_panel(const VariableSetSchema& schema,
                                   const std::vector<std::string>& names,
                                   std::map<std::pair<std::string, std::string>,
                                            std::pair<double, Eigen::VectorXd>>& cells,
                                   const std::map<std::string, double>& weights) {
  PanelDataset p;
  p.schema = schema;
  p.covariate_names = names;
  std::set<std::string> units;
  for (const auto& [k, v] : cells) units.insert(k.first);
  p.unit_ids.assign(units.begin(), units.end());
  std::map<std::string, int> uidx;
  for (std::size_t i = 0; i < p.unit_ids.size(); ++i) uidx[p.unit_ids[i]] = static_cast<int>(i);
  p.y.resize(cells.size());
  p.X.resize(cells.size(), static_cast<int>(names.size()));
  int i = 0;
  for (const auto& [k, v] : cells) {  // map order = (unit, period) sorted
    p.row_unit.push_back(uidx[k.first]);
    p.row_period.push_back(k.second);
    p.y[i] = v.first;
    p.X.row(i) = v.second;
    ++i;
  }
  p.unit_weight = Eigen::VectorXd::Ones(p.n_units());
  for (const auto& [u, w] : weights)
    if (uidx.count(u)) p.unit_weight[uidx[u]] = w;
  return p;
}
}  // namespace detail

// Joins annual log yields with annual covariates on (unit, year). Rows present
// on only one side are dropped and reported.
inline PanelDataset make_short_run(const std::vector<YieldRecord>& yields,
                                   const CovariateMatrix& cov, bool use_area_weights = false,
                                   DropReport* report = nullptr) {
  std::map<std::pair<std::string, std::string>, int> cov_rows;
  for (int i = 0; i < cov.X.rows(); ++i) {
    auto key = std::make_pair(cov.unit_ids[i], cov.period[i]);
    if (!cov_rows.emplace(key, i).second)
      throw data_error("duplicate covariate row for unit " + key.first + " period " + key.second);
  }
  std::map<std::pair<std::string, std::string>, std::pair<double, Eigen::VectorXd>> cells;
  std::map<std::string, double> weights;
  std::map<std::string, double> area_sum;
  std::map<std::string, int> area_n;
  for (const auto& r : yields) {
    if (!(r.yield > 0)) throw data_error("non-positive yield for unit " + r.unit_id + " year " +
                                         std::to_string(r.year));
    auto key = std::make_pair(r.unit_id, std::to_string(r.year));
    auto it = cov_rows.find(key);
    if (it == cov_rows.end()) {
      if (report) report->add("no covariates for unit " + r.unit_id + " year " + std::to_string(r.year));
      continue;
    }
    if (!cells.emplace(key, std::make_pair(std::log(r.yield),
                                           Eigen::VectorXd(cov.X.row(it->second))))
             .second)
      throw data_error("duplicate yield row for unit " + r.unit_id + " year " +
                       std::to_string(r.year));
    area_sum[r.unit_id] += r.area;
    area_n[r.unit_id] += 1;
  }
  if (use_area_weights)
    for (const auto& [u, s] : area_sum) weights[u] = s / area_n[u];
  return detail::assemble_panel(cov.schema, cov.names, cells, weights);
}

enum class LongRunOutcome { MeanOfLogs, LogOfMeans };

// Two-period panel: outcome and covariates averaged over each year range.
inline PanelDataset make_long_run(const std::vector<YieldRecord>& yields,
                                  const CovariateMatrix& cov, const YearRange& r1,
                                  const YearRange& r2,
                                  LongRunOutcome mode = LongRunOutcome::MeanOfLogs,
                                  bool use_area_weights = false, DropReport* report = nullptr) {
  CovariateMatrix lr = long_run_average(cov, r1, r2, report);
  std::map<std::pair<std::string, std::string>, int> cov_rows;
  for (int i = 0; i < lr.X.rows(); ++i) cov_rows[{lr.unit_ids[i], lr.period[i]}] = i;

  struct YAcc {
    double sum = 0;
    int n = 0;
  };
  std::map<std::pair<std::string, std::string>, YAcc> yacc;
  std::map<std::string, double> area_sum;
  std::map<std::string, int> area_n;
  for (const auto& r : yields) {
    if (!(r.yield > 0)) throw data_error("non-positive yield for unit " + r.unit_id + " year " +
                                         std::to_string(r.year));
    const YearRange* rr = r1.contains(r.year) ? &r1 : r2.contains(r.year) ? &r2 : nullptr;
    if (!rr) continue;
    auto& a = yacc[{r.unit_id, rr->label()}];
    a.sum += mode == LongRunOutcome::MeanOfLogs ? std::log(r.yield) : r.yield;
    a.n += 1;
    area_sum[r.unit_id] += r.area;
    area_n[r.unit_id] += 1;
  }
  std::map<std::pair<std::string, std::string>, std::pair<double, Eigen::VectorXd>> cells;
  for (const auto& [key, a] : yacc) {
    auto it = cov_rows.find(key);
    if (it == cov_rows.end()) continue;
    auto other = std::make_pair(key.first, key.second == r1.label() ? r2.label() : r1.label());
    if (yacc.find(other) == yacc.end()) {
      if (report) report->add("dropped unit " + key.first + ": no outcomes in range " + other.second);
      continue;
    }
    double m = a.sum / a.n;
    double yv = mode == LongRunOutcome::MeanOfLogs ? m : std::log(m);
    cells[key] = {yv, Eigen::VectorXd(lr.X.row(it->second))};
  }
  std::map<std::string, double> weights;
  if (use_area_weights)
    for (const auto& [u, s] : area_sum) weights[u] = s / area_n[u];
  return detail::assemble_panel(cov.schema, cov.names, cells, weights);
}

// k unit-clustered folds whose sizes differ by at most one; deterministic in
// (unit order, seed).
struct FoldAssignment {
  int k = 0;
  std::vector<int> fold_of_unit;

  std::vector<int> units_in(int fold) const {
    std::vector<int> out;
    for (std::size_t u = 0; u < fold_of_unit.size(); ++u)
      if (fold_of_unit[u] == fold) out.push_back(static_cast<int>(u));
    return out;
  }
  std::vector<int> units_not_in(int fold) const {
    std::vector<int> out;
    for (std::size_t u = 0; u < fold_of_unit.size(); ++u)
      if (fold_of_unit[u] != fold) out.push_back(static_cast<int>(u));
    return out;
  }
};

inline FoldAssignment assign_folds(int n_units, int k, std::uint64_t seed) {
  if (k < 2) throw config_error("fold count must be at least 2, got " + std::to_string(k));
  if (k > n_units)
    throw config_error("fold count " + std::to_string(k) + " exceeds unit count " +
                       std::to_string(n_units));
  std::vector<int> order(n_units);
  for (int i = 0; i < n_units; ++i) order[i] = i;
  RngStream rng(derive_seed(seed, "folds"));
  rng.shuffle(order);
  FoldAssignment f;
  f.k = k;
  f.fold_of_unit.assign(n_units, 0);
  for (int i = 0; i < n_units; ++i) f.fold_of_unit[order[i]] = i % k;
  return f;
}

// Without-replacement unit subsample; fraction 1 returns every unit unchanged.
inline std::vector<int> bootstrap_subsample(int n_units, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0) || fraction > 1.0)
    throw config_error("subsample fraction must be in (0, 1], got " + format_double(fraction));
  std::vector<int> order(n_units);
  for (int i = 0; i < n_units; ++i) order[i] = i;
  if (fraction >= 1.0) return order;
  RngStream rng(derive_seed(seed, "subsample"));
  rng.shuffle(order);
  auto keep = static_cast<std::size_t>(std::llround(fraction * n_units));
  keep = std::max<std::size_t>(1, std::min<std::size_t>(keep, n_units));
  order.resize(keep);
  std::sort(order.begin(), order.end());
  return order;
}

inline PanelDataset subset_units(const PanelDataset& p, const std::vector<int>& unit_idx) {
  PanelDataset out;
  out.schema = p.schema;
  out.covariate_names = p.covariate_names;
  std::vector<int> newidx(p.n_units(), -1);
  for (std::size_t i = 0; i < unit_idx.size(); ++i) {
    newidx[unit_idx[i]] = static_cast<int>(i);
    out.unit_ids.push_back(p.unit_ids[unit_idx[i]]);
  }
  std::vector<int> rows;
  for (int i = 0; i < p.n_rows(); ++i)
    if (newidx[p.row_unit[i]] >= 0) rows.push_back(i);
  out.y.resize(rows.size());
  out.X.resize(rows.size(), p.X.cols());
  out.unit_weight.resize(unit_idx.size());
  for (std::size_t i = 0; i < unit_idx.size(); ++i) out.unit_weight[i] = p.unit_weight[unit_idx[i]];
  for (std::size_t k = 0; k < rows.size(); ++k) {
    int i = rows[k];
    out.row_unit.push_back(newidx[p.row_unit[i]]);
    out.row_period.push_back(p.row_period[i]);
    out.y[k] = p.y[i];
    out.X.row(k) = p.X.row(i);
  }
  return out;
}

}  // namespace paneldml
