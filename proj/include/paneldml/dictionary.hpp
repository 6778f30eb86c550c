#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "paneldml/common.hpp"
#include "paneldml/weather.hpp"

namespace paneldml {

// Direction in covariate space for the average derivative. Weights may depend
// on the row: the proportional-share convention spreads one unit of mass over
// the above-threshold heat bins in proportion to their exposure.
struct Direction {
  enum class Convention { UnitHigher, ProportionalShare, UnitColumn };
  Convention conv = Convention::UnitHigher;
  int column = -1;  // UnitColumn only

  static Direction unit_higher() { return {Convention::UnitHigher, -1}; }
  static Direction proportional_share() { return {Convention::ProportionalShare, -1}; }
  static Direction unit_column(int col) { return {Convention::UnitColumn, col}; }

  template <typename Row>
  Eigen::VectorXd weights_for_row(const VariableSetSchema& schema,
                                  const std::vector<ColumnInfo>& cols, const Row& x) const {
    const int p = static_cast<int>(cols.size());
    Eigen::VectorXd w = Eigen::VectorXd::Zero(p);
    switch (conv) {
      case Convention::UnitColumn:
        if (column < 0 || column >= p) throw schema_error("direction column out of range");
        w[column] = 1.0;
        return w;
      case Convention::UnitHigher: {
        for (int j = 0; j < p; ++j)
          if (cols[j].role == ColumnInfo::Role::Higher) {
            w[j] = 1.0;
            return w;
          }
        throw schema_error("unit-higher direction requires a 'higher' covariate");
      }
      case Convention::ProportionalShare: {
        double total = 0;
        int first = -1;
        for (int j = 0; j < p; ++j) {
          if (cols[j].role == ColumnInfo::Role::HeatBin && cols[j].bin_lo >= schema.threshold_c) {
            if (first < 0) first = j;
            total += x[j];
          }
        }
        if (first < 0) throw schema_error("proportional-share direction requires heat bins");
        if (total > 0) {
          for (int j = 0; j < p; ++j)
            if (cols[j].role == ColumnInfo::Role::HeatBin && cols[j].bin_lo >= schema.threshold_c)
              w[j] = x[j] / total;
        } else {
          w[first] = 1.0;  // no exposure above the threshold: marginal mass enters at it
        }
        return w;
      }
    }
    return w;
  }

  static Direction for_schema(const VariableSetSchema& s) {
    return s.kind == SchemaKind::YearlyLinear ? unit_higher() : proportional_share();
  }
};

// One dictionary term: cov_a^pow_a, optionally times cov_b^pow_b.
struct TermSpec {
  int cov_a = 0;
  int pow_a = 1;
  int cov_b = -1;
  int pow_b = 0;
  bool interaction() const { return cov_b >= 0; }
};

// Polynomial dictionary over a schema's covariates: pure powers 1..degree of
// every covariate, then heat^p * prec^q interactions (1 <= p, q <= degree)
// within the same period. Pure terms are ordered by covariate then degree,
// interactions by (period, heat covariate, p, q). Construction is
// deterministic; ordering never depends on data.
struct BasisDictionary {
  VariableSetSchema schema;
  int degree = 1;
  bool identity = false;  // raw covariates, no standardization
  std::vector<TermSpec> terms;
  Eigen::VectorXd mean, sd;          // training-fold standardization
  std::vector<std::uint8_t> dropped; // zero-variance terms, excluded from fits

  int n_terms() const { return static_cast<int>(terms.size()); }
  bool scaled() const { return mean.size() == n_terms(); }

  std::string term_name(int t) const {
    auto names = schema.covariate_names();
    const auto& s = terms[t];
    std::string out = names[s.cov_a];
    if (s.pow_a > 1) out += "^" + std::to_string(s.pow_a);
    if (s.interaction()) {
      out += "*" + names[s.cov_b];
      if (s.pow_b > 1) out += "^" + std::to_string(s.pow_b);
    }
    return out;
  }
};

inline BasisDictionary build_dictionary(const VariableSetSchema& schema, int degree) {
  if (degree < 1) throw config_error("dictionary degree must be positive");
  BasisDictionary d;
  d.schema = schema;
  d.degree = degree;
  const auto cols = schema.columns();
  const int p = static_cast<int>(cols.size());
  for (int c = 0; c < p; ++c)
    for (int k = 1; k <= degree; ++k) d.terms.push_back({c, k, -1, 0});
  // periods in column order; for yearly schemas there is a single period 0
  std::vector<int> months;
  for (const auto& c : cols)
    if (std::find(months.begin(), months.end(), c.month) == months.end()) months.push_back(c.month);
  for (int m : months) {
    int prec = -1;
    for (int c = 0; c < p; ++c)
      if (cols[c].month == m && cols[c].role == ColumnInfo::Role::Precip) prec = c;
    if (prec < 0) continue;
    for (int c = 0; c < p; ++c) {
      if (cols[c].month != m || cols[c].role == ColumnInfo::Role::Precip) continue;
      for (int pa = 1; pa <= degree; ++pa)
        for (int pb = 1; pb <= degree; ++pb) d.terms.push_back({c, pa, prec, pb});
    }
  }
  return d;
}

inline BasisDictionary identity_dictionary(const VariableSetSchema& schema) {
  BasisDictionary d;
  d.schema = schema;
  d.degree = 1;
  d.identity = true;
  const int p = schema.dimension();
  for (int c = 0; c < p; ++c) d.terms.push_back({c, 1, -1, 0});
  d.mean = Eigen::VectorXd::Zero(p);
  d.sd = Eigen::VectorXd::Ones(p);
  d.dropped.assign(p, 0);
  return d;
}

inline int default_degree(SchemaKind k) { return k == SchemaKind::MonthlyFlexible ? 2 : 3; }

// Raw (unstandardized) term values.
inline Eigen::MatrixXd expand_raw(const BasisDictionary& d, const Eigen::MatrixXd& X) {
  if (X.cols() != d.schema.dimension())
    throw schema_error("row dimension " + std::to_string(X.cols()) + " does not match schema (" +
                       std::to_string(d.schema.dimension()) + ")");
  if (!X.allFinite()) throw data_error("non-finite covariate value in dictionary expansion");
  const int n = static_cast<int>(X.rows());
  const int T = d.n_terms();
  Eigen::MatrixXd B(n, T);
  for (int t = 0; t < T; ++t) {
    const auto& s = d.terms[t];
    Eigen::ArrayXd v = X.col(s.cov_a).array().pow(s.pow_a);
    if (s.interaction()) v *= X.col(s.cov_b).array().pow(s.pow_b);
    B.col(t) = v;
  }
  return B;
}

// Standardization constants from training rows; zero-variance terms are marked
// dropped (their standardized value and gradient become 0, coefficients 0).
inline void fit_scale(BasisDictionary& d, const Eigen::MatrixXd& raw_train,
                      DropReport* report = nullptr) {
  if (d.identity) return;
  const int T = d.n_terms();
  const auto n = static_cast<double>(raw_train.rows());
  d.mean = raw_train.colwise().mean();
  d.sd.resize(T);
  d.dropped.assign(T, 0);
  for (int t = 0; t < T; ++t) {
    double var = (raw_train.col(t).array() - d.mean[t]).square().sum() / n;
    d.sd[t] = std::sqrt(var);
    if (!(d.sd[t] > 0)) {
      d.dropped[t] = 1;
      d.sd[t] = 1.0;
      if (report) report->add("dropped zero-variance term " + d.term_name(t));
    }
  }
}

inline Eigen::MatrixXd apply_scale(const BasisDictionary& d, const Eigen::MatrixXd& raw) {
  if (d.identity) return raw;
  if (!d.scaled()) throw numeric_error("dictionary scale not fitted");
  Eigen::MatrixXd B = (raw.rowwise() - d.mean.transpose()).array().rowwise() /
                      d.sd.transpose().array();
  for (int t = 0; t < d.n_terms(); ++t)
    if (d.dropped[t]) B.col(t).setZero();
  return B;
}

inline Eigen::MatrixXd expand(const BasisDictionary& d, const Eigen::MatrixXd& X) {
  return apply_scale(d, expand_raw(d, X));
}

// Directional derivative of every raw term at each row. The derivative is
// taken through the term itself; the per-unit means subtracted later are
// treated as constants, so demeaning never changes these rows.
inline Eigen::MatrixXd gradient_raw(const BasisDictionary& d, const Eigen::MatrixXd& X,
                                    const Direction& dir) {
  if (X.cols() != d.schema.dimension()) throw schema_error("row dimension does not match schema");
  const int n = static_cast<int>(X.rows());
  const int T = d.n_terms();
  const auto cols = d.schema.columns();
  Eigen::MatrixXd G(n, T);
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd w = dir.weights_for_row(d.schema, cols, X.row(i));
    for (int t = 0; t < T; ++t) {
      const auto& s = d.terms[t];
      double g = 0;
      if (w[s.cov_a] != 0.0) {
        double v = s.pow_a * std::pow(X(i, s.cov_a), s.pow_a - 1);
        if (s.interaction()) v *= std::pow(X(i, s.cov_b), s.pow_b);
        g += v * w[s.cov_a];
      }
      if (s.interaction() && w[s.cov_b] != 0.0) {
        double v = s.pow_b * std::pow(X(i, s.cov_b), s.pow_b - 1) * std::pow(X(i, s.cov_a), s.pow_a);
        g += v * w[s.cov_b];
      }
      G(i, t) = g;
    }
  }
  return G;
}

// Gradient of the standardized terms: raw gradient over sd, dropped terms 0.
inline Eigen::MatrixXd gradient_scaled(const BasisDictionary& d, const Eigen::MatrixXd& G_raw) {
  if (d.identity) return G_raw;
  if (!d.scaled()) throw numeric_error("dictionary scale not fitted");
  Eigen::MatrixXd G = G_raw.array().rowwise() / d.sd.transpose().array();
  for (int t = 0; t < d.n_terms(); ++t)
    if (d.dropped[t]) G.col(t).setZero();
  return G;
}

inline Eigen::MatrixXd gradient_in_direction(const BasisDictionary& d, const Eigen::MatrixXd& X,
                                             const Direction& dir) {
  return gradient_scaled(d, gradient_raw(d, X, dir));
}

}  // namespace paneldml
