#include <catch2/catch_amalgamated.hpp>
#include <set>

#include "paneldml/panel.hpp"

using namespace paneldml;

namespace {

PanelDataset tiny_panel() {
  PanelDataset p;
  p.schema = VariableSetSchema::make(SchemaKind::YearlyLinear);
  p.covariate_names = p.schema.covariate_names();
  p.unit_ids = {"a", "b"};
  p.row_unit = {0, 0, 1, 1, 1};
  p.row_period = {"2000", "2001", "2000", "2001", "2002"};
  p.y.resize(5);
  p.y << 1, 3, 2, 4, 9;
  p.X = Eigen::MatrixXd::Zero(5, 3);
  p.unit_weight = Eigen::VectorXd::Ones(2);
  return p;
}

}  // namespace

TEST_CASE("within transform subtracts unit means", "[panel]") {
  auto p = tiny_panel();
  auto yd = demean_by_unit(p.y, p.row_unit, p.n_units());
  CHECK(yd[0] == Catch::Approx(-1.0));
  CHECK(yd[1] == Catch::Approx(1.0));
  CHECK(yd[2] == Catch::Approx(-3.0));
  CHECK(yd[3] == Catch::Approx(-1.0));
  CHECK(yd[4] == Catch::Approx(4.0));
}

TEST_CASE("within transform is idempotent and kills unit constants", "[panel]") {
  RngStream rng(5);
  int n_units = 7;
  std::vector<int> row_unit;
  for (int u = 0; u < n_units; ++u)
    for (int t = 0, T = 2 + static_cast<int>(rng.bounded(4)); t < T; ++t) row_unit.push_back(u);
  int n = static_cast<int>(row_unit.size());
  Eigen::MatrixXd M(n, 3);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < 3; ++j) M(i, j) = rng.normal();
  auto d1 = demean_by_unit(M, row_unit, n_units);
  auto d2 = demean_by_unit(d1, row_unit, n_units);
  CHECK((d1 - d2).cwiseAbs().maxCoeff() < 1e-14);

  Eigen::MatrixXd C(n, 3);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < 3; ++j) C(i, j) = 10.0 * row_unit[i] + j;  // constant within unit
  CHECK(demean_by_unit(C, row_unit, n_units).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("units with a single period are dropped", "[panel]") {
  auto p = tiny_panel();
  p.row_unit = {0, 0, 1, 1, 1};
  PanelDataset q = p;
  q.unit_ids = {"a", "b", "c"};
  q.row_unit = {0, 0, 1, 1, 2};
  q.unit_weight = Eigen::VectorXd::Ones(3);
  DropReport rep;
  auto r = drop_short_units(q, &rep);
  CHECK(r.n_units() == 2);
  CHECK(r.n_rows() == 4);
  REQUIRE(rep.notes.size() == 1);
  CHECK(rep.notes[0].find("c") != std::string::npos);
}

TEST_CASE("fold assignment partitions units evenly", "[panel]") {
  for (int n : {10, 11, 23, 100}) {
    auto f = assign_folds(n, 5, 17);
    REQUIRE(static_cast<int>(f.fold_of_unit.size()) == n);
    std::vector<int> sizes(5, 0);
    for (int x : f.fold_of_unit) {
      REQUIRE(x >= 0);
      REQUIRE(x < 5);
      sizes[x]++;
    }
    int lo = *std::min_element(sizes.begin(), sizes.end());
    int hi = *std::max_element(sizes.begin(), sizes.end());
    CHECK(hi - lo <= 1);
  }
  auto f1 = assign_folds(40, 5, 99);
  auto f2 = assign_folds(40, 5, 99);
  CHECK(f1.fold_of_unit == f2.fold_of_unit);
  auto f3 = assign_folds(40, 5, 100);
  CHECK(f1.fold_of_unit != f3.fold_of_unit);
  CHECK_THROWS_AS(assign_folds(3, 5, 1), config_error);
  CHECK_THROWS_AS(assign_folds(10, 1, 1), config_error);
}

TEST_CASE("bootstrap subsample", "[panel]") {
  auto s = bootstrap_subsample(10, 1.0, 4);
  CHECK(s.size() == 10);
  for (int i = 0; i < 10; ++i) CHECK(s[i] == i);
  auto s2 = bootstrap_subsample(10, 0.8, 4);
  CHECK(s2.size() == 8);
  std::set<int> uniq(s2.begin(), s2.end());
  CHECK(uniq.size() == 8);
  CHECK(bootstrap_subsample(10, 0.8, 4) == s2);
  CHECK_THROWS_AS(bootstrap_subsample(10, 0.0, 4), config_error);
  CHECK_THROWS_AS(bootstrap_subsample(10, 1.5, 4), config_error);
}

TEST_CASE("short run join matches by unit and year", "[panel]") {
  auto schema = VariableSetSchema::make(SchemaKind::YearlyLinear);
  CovariateMatrix cov;
  cov.schema = schema;
  cov.names = schema.covariate_names();
  cov.unit_ids = {"a", "a", "b", "b"};
  cov.period = {"2000", "2001", "2000", "2001"};
  cov.X.resize(4, 3);
  cov.X << 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12;
  std::vector<YieldRecord> ys = {{"a", 2000, 2.0, 1.0},
                                 {"a", 2001, 4.0, 1.0},
                                 {"b", 2000, 8.0, 1.0},
                                 {"b", 2001, 16.0, 1.0},
                                 {"c", 2000, 5.0, 1.0}};
  DropReport rep;
  auto p = make_short_run(ys, cov, false, &rep);
  CHECK(p.n_rows() == 4);
  CHECK(p.n_units() == 2);
  CHECK(p.y[0] == Catch::Approx(std::log(2.0)));
  CHECK(p.X(1, 0) == Catch::Approx(4.0));
  REQUIRE(rep.notes.size() == 1);  // c has no covariates
  CHECK(rep.notes[0].find("c") != std::string::npos);

  std::vector<YieldRecord> bad = {{"a", 2000, -1.0, 1.0}};
  CHECK_THROWS_AS(make_short_run(bad, cov), data_error);
  std::vector<YieldRecord> dup = {{"a", 2000, 2.0, 1.0}, {"a", 2000, 3.0, 1.0}};
  CHECK_THROWS_AS(make_short_run(dup, cov), data_error);
}

TEST_CASE("long run panel has two periods per unit", "[panel]") {
  auto schema = VariableSetSchema::make(SchemaKind::YearlyLinear);
  CovariateMatrix cov;
  cov.schema = schema;
  cov.names = schema.covariate_names();
  std::vector<YieldRecord> ys;
  for (int y = 1990; y <= 1999; ++y) {
    cov.unit_ids.push_back("a");
    cov.period.push_back(std::to_string(y));
    ys.push_back({"a", y, 1.0 + 0.1 * (y - 1990), 1.0});
  }
  cov.X = Eigen::MatrixXd::Constant(10, 3, 2.0);
  YearRange r1{1990, 1994}, r2{1995, 1999};
  auto p = make_long_run(ys, cov, r1, r2);
  CHECK(p.n_rows() == 2);
  CHECK(p.n_units() == 1);
  CHECK(p.row_period[0] == "1990-1994");
  // mean of logs by default
  double m1 = 0;
  for (int y = 1990; y <= 1994; ++y) m1 += std::log(1.0 + 0.1 * (y - 1990));
  CHECK(p.y[0] == Catch::Approx(m1 / 5));
  // log of means behind the flag
  auto p2 = make_long_run(ys, cov, r1, r2, LongRunOutcome::LogOfMeans);
  double a1 = 0;
  for (int y = 1990; y <= 1994; ++y) a1 += 1.0 + 0.1 * (y - 1990);
  CHECK(p2.y[0] == Catch::Approx(std::log(a1 / 5)));
}

TEST_CASE("subset units keeps row order and weights", "[panel]") {
  auto p = tiny_panel();
  auto q = subset_units(p, {1});
  CHECK(q.n_units() == 1);
  CHECK(q.n_rows() == 3);
  CHECK(q.unit_ids[0] == "b");
  CHECK(q.y[2] == Catch::Approx(9.0));
}
