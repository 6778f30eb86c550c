#include <catch2/catch_amalgamated.hpp>

#include "paneldml/learners.hpp"
#include "paneldml/rng.hpp"

using namespace paneldml;

namespace {

BasisDictionary tiny_dict(int p) {
  VariableSetSchema s = VariableSetSchema::make(SchemaKind::YearlyLinear);
  BasisDictionary d;
  d.schema = s;
  d.degree = 1;
  d.identity = true;
  for (int j = 0; j < p; ++j) d.terms.push_back({j % 3, 1 + j / 3, -1, 0});
  d.mean = Eigen::VectorXd::Zero(p);
  d.sd = Eigen::VectorXd::Ones(p);
  return d;
}

RegressionData synth_reg(RngStream& rng, int n, int p, int q, double noise) {
  RegressionData td;
  td.B.resize(n, p);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < p; ++j) td.B(i, j) = rng.normal();
  td.D = Eigen::MatrixXd::Zero(n, q);
  for (int i = 0; i < n; ++i)
    if (int g = static_cast<int>(rng.bounded(static_cast<std::uint64_t>(q) + 1)); g > 0)
      td.D(i, g - 1) = 1.0;
  Eigen::VectorXd beta(p), delta(q);
  for (int j = 0; j < p; ++j) beta[j] = rng.normal();
  for (int j = 0; j < q; ++j) delta[j] = rng.normal();
  td.y = td.B * beta + td.D * delta;
  for (int i = 0; i < n; ++i) td.y[i] += noise * rng.normal();
  td.w = Eigen::VectorXd::Ones(n);
  return td;
}

}  // namespace

TEST_CASE("year dummies use sorted levels with the first as base", "[learners]") {
  std::vector<std::string> periods = {"2003", "2001", "2002", "2001", "2003"};
  YearDesign yd = year_dummies(periods);
  REQUIRE(yd.levels == std::vector<std::string>{"2001", "2002", "2003"});
  REQUIRE(yd.D.rows() == 5);
  REQUIRE(yd.D.cols() == 2);  // base level carried by the intercept-free within fit
  REQUIRE(yd.D(0, 1) == 1.0);
  REQUIRE(yd.D(1, 0) == 0.0);
  REQUIRE(yd.D(2, 0) == 1.0);
  REQUIRE(yd.D(0, 0) == 0.0);
}

TEST_CASE("least squares recovers noiseless coefficients exactly", "[learners]") {
  RngStream rng(derive_seed(11, "ols-exact"));
  auto td = synth_reg(rng, 60, 4, 3, 0.0);
  auto m = fit_ols(td, tiny_dict(4), {"y0", "y1", "y2", "y3"}, Method::OlsLinear);
  Eigen::VectorXd fitted = td.B * m.beta + td.D * m.year_coef;
  REQUIRE((fitted - td.y).lpNorm<Eigen::Infinity>() < 1e-9);
  REQUIRE(m.in_sample_mse < 1e-18);
  REQUIRE(m.dropped_columns.empty());
}

TEST_CASE("least squares matches the normal equations oracle", "[learners]") {
  RngStream rng(derive_seed(12, "ols-oracle"));
  for (int rep = 0; rep < 5; ++rep) {
    auto td = synth_reg(rng, 80, 5, 2, 0.7);
    auto m = fit_ols(td, tiny_dict(5), {"a", "b", "c"}, Method::OlsLinear);
    Eigen::MatrixXd A(td.B.rows(), 7);
    A << td.B, td.D;
    Eigen::VectorXd ref = (A.transpose() * A).ldlt().solve(A.transpose() * td.y);
    Eigen::VectorXd got(7);
    got << m.beta, m.year_coef;
    REQUIRE((got - ref).lpNorm<Eigen::Infinity>() < 1e-8);
  }
}

TEST_CASE("collinear columns are dropped and named", "[learners]") {
  RngStream rng(derive_seed(13, "ols-collinear"));
  auto td = synth_reg(rng, 50, 3, 0, 0.1);
  Eigen::MatrixXd B(50, 4);
  B << td.B, td.B.col(1);
  td.B = B;
  auto m = fit_ols(td, tiny_dict(4), {}, Method::OlsLinear);
  REQUIRE(m.dropped_columns.size() == 1);
  Eigen::MatrixXd A2 = td.B.leftCols(3);
  Eigen::VectorXd ref = (A2.transpose() * A2).ldlt().solve(A2.transpose() * td.y);
  Eigen::VectorXd fit_full = td.B * m.beta;
  REQUIRE((fit_full - A2 * ref).lpNorm<Eigen::Infinity>() < 1e-8);
}

TEST_CASE("row weights act like row duplication", "[learners]") {
  RngStream rng(derive_seed(14, "ols-weights"));
  auto td = synth_reg(rng, 30, 3, 2, 0.5);
  td.w[4] = 3.0;
  td.w[17] = 2.0;
  auto m = fit_ols(td, tiny_dict(3), {"a", "b", "c"}, Method::OlsLinear);

  RegressionData dup;
  int extra = 3;  // two extra copies of row 4, one of row 17
  dup.B.resize(33, 3);
  dup.D.resize(33, 2);
  dup.y.resize(33);
  dup.B.topRows(30) = td.B;
  dup.D.topRows(30) = td.D;
  dup.y.head(30) = td.y;
  for (int k : {30, 31}) {
    dup.B.row(k) = td.B.row(4);
    dup.D.row(k) = td.D.row(4);
    dup.y[k] = td.y[4];
  }
  dup.B.row(32) = td.B.row(17);
  dup.D.row(32) = td.D.row(17);
  dup.y[32] = td.y[17];
  dup.w = Eigen::VectorXd::Ones(30 + extra);
  auto md = fit_ols(dup, tiny_dict(3), {"a", "b", "c"}, Method::OlsLinear);
  REQUIRE((m.beta - md.beta).lpNorm<Eigen::Infinity>() < 1e-9);
  REQUIRE((m.year_coef - md.year_coef).lpNorm<Eigen::Infinity>() < 1e-9);
}

TEST_CASE("rank zero design raises a numeric error", "[learners]") {
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(10, 2);
  Eigen::VectorXd y = Eigen::VectorXd::Ones(10);
  REQUIRE_THROWS_AS(solve_ols(A, y), numeric_error);
}

TEST_CASE("retuned year effects lower held-out mse without touching gamma", "[learners]") {
  RngStream rng(derive_seed(15, "retune"));
  int n = 40;
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(n, 2);
  for (int i = 0; i < n; ++i)
    if (i % 3 > 0) D(i, i % 3 - 1) = 1.0;
  Eigen::VectorXd gamma(n), y(n);
  for (int i = 0; i < n; ++i) {
    gamma[i] = rng.normal();
    y[i] = gamma[i] + (i % 3 == 1 ? 0.8 : i % 3 == 2 ? -0.3 : 0.0) + 0.01 * rng.normal();
  }
  Eigen::VectorXd w = Eigen::VectorXd::Ones(n);
  double with_retune = eval_mse_with_retune(y, gamma, D, w);
  double without = weighted_mse(y - gamma, w);
  REQUIRE(with_retune < without);
  REQUIRE(with_retune < 0.001);
}

TEST_CASE("method names round trip", "[learners]") {
  for (Method m : {Method::OlsLinear, Method::OlsPoly, Method::Lasso, Method::LassoDml, Method::NNet, Method::NNetDml}) {
    REQUIRE(parse_method(method_name(m)) == m);
  }
  REQUIRE_THROWS_AS(parse_method("boosting"), config_error);
  REQUIRE(is_debiased(Method::LassoDml));
  REQUIRE(is_debiased(Method::NNetDml));
  REQUIRE(!is_debiased(Method::Lasso));
  REQUIRE(is_cross_fit(Method::Lasso));
  REQUIRE(!is_cross_fit(Method::OlsLinear));
}
