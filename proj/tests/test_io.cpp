#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "paneldml/io.hpp"

namespace {

namespace fs = std::filesystem;

fs::path scratch_dir() {
  auto d = fs::temp_directory_path() / "paneldml_io_tests";
  fs::create_directories(d);
  return d;
}

paneldml::PanelDataset small_panel(paneldml::RngStream& rng, int n_units) {
  using namespace paneldml;
  PanelDataset p;
  p.schema = VariableSetSchema::make(SchemaKind::YearlyLinear);
  p.covariate_names = p.schema.covariate_names();
  p.X.resize(2 * n_units, 3);
  p.y.resize(2 * n_units);
  p.unit_weight = Eigen::VectorXd::Ones(n_units);
  int r = 0;
  for (int u = 0; u < n_units; ++u) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "u%03d", u);
    p.unit_ids.push_back(buf);
    double a = rng.normal(1.0, 1.0);
    for (int t = 0; t < 2; ++t, ++r) {
      p.row_unit.push_back(u);
      p.row_period.push_back(t == 0 ? "2001" : "2002");
      p.X(r, 0) = rng.uniform(50.0, 150.0);
      p.X(r, 1) = rng.uniform(0.0, 30.0);
      p.X(r, 2) = rng.uniform(0.0, 900.0);
      p.y[r] = a + 0.02 * p.X(r, 0) - 0.05 * p.X(r, 1) + 0.001 * p.X(r, 2) +
               rng.normal(0.0, 0.1);
    }
  }
  return p;
}

}  // namespace

TEST_CASE("json emitter is ordered, escaped, and round-trippable", "[io]") {
  using namespace paneldml;
  JsonValue j = JsonValue::object();
  j["zeta"] = 1.0 / 3.0;
  j["alpha"] = 0.1;
  j["big"] = 1e300;
  j["nan_value"] = std::numeric_limits<double>::quiet_NaN();
  j["count"] = std::int64_t(42);
  j["flag"] = true;
  j["name"] = "quote\" slash\\ line\n tab\t bell\x07";
  JsonValue arr = JsonValue::array();
  arr.push_back(1.5);
  arr.push_back("two");
  JsonValue inner = JsonValue::object();
  inner["k"] = -7;
  arr.push_back(std::move(inner));
  j["items"] = std::move(arr);

  std::string s = j.dump();
  REQUIRE(s == j.dump());  // deterministic

  // insertion order preserved, not sorted
  REQUIRE(s.find("\"zeta\"") < s.find("\"alpha\""));
  REQUIRE(s.find("\"alpha\"") < s.find("\"items\""));

  nlohmann::json back = nlohmann::json::parse(s);
  REQUIRE(back["zeta"].get<double>() == 1.0 / 3.0);
  REQUIRE(back["alpha"].get<double>() == 0.1);
  REQUIRE(back["big"].get<double>() == 1e300);
  REQUIRE(back["nan_value"].is_null());
  REQUIRE(back["count"].get<int>() == 42);
  REQUIRE(back["flag"].get<bool>() == true);
  REQUIRE(back["name"].get<std::string>() == "quote\" slash\\ line\n tab\t bell\x07");
  REQUIRE(back["items"][0].get<double>() == 1.5);
  REQUIRE(back["items"][2]["k"].get<int>() == -7);
}

TEST_CASE("dictionary manifest re-expands bit-exactly", "[io]") {
  using namespace paneldml;
  RngStream rng(17);
  VariableSetSchema schema = VariableSetSchema::make(SchemaKind::YearlyLinear);
  BasisDictionary d = build_dictionary(schema, 3);
  Eigen::MatrixXd X(60, 3);
  for (int i = 0; i < X.rows(); ++i)
    for (int c = 0; c < 3; ++c) X(i, c) = rng.uniform(0.0, 100.0);
  fit_scale(d, expand_raw(d, X));

  std::string text = dictionary_manifest(d).dump();
  BasisDictionary d2 = dictionary_from_manifest(nlohmann::json::parse(text));
  REQUIRE(d2.degree == d.degree);
  REQUIRE(d2.identity == d.identity);
  REQUIRE(d2.schema.kind == d.schema.kind);
  REQUIRE(d2.terms.size() == d.terms.size());
  for (std::size_t i = 0; i < d.terms.size(); ++i) {
    REQUIRE(d2.terms[i].cov_a == d.terms[i].cov_a);
    REQUIRE(d2.terms[i].pow_a == d.terms[i].pow_a);
    REQUIRE(d2.terms[i].cov_b == d.terms[i].cov_b);
    REQUIRE(d2.terms[i].pow_b == d.terms[i].pow_b);
  }
  REQUIRE((d2.mean == d.mean));
  REQUIRE((d2.sd == d.sd));
  REQUIRE(d2.dropped == d.dropped);

  Eigen::MatrixXd fresh(20, 3);
  for (int i = 0; i < fresh.rows(); ++i)
    for (int c = 0; c < 3; ++c) fresh(i, c) = rng.uniform(0.0, 100.0);
  REQUIRE((expand(d2, fresh) == expand(d, fresh)));

  REQUIRE(dictionary_hash_hex(d) == dictionary_hash_hex(d2));
  d2.mean[0] += 1e-9;
  REQUIRE(dictionary_hash_hex(d) != dictionary_hash_hex(d2));

  BasisDictionary id = identity_dictionary(schema);
  BasisDictionary id2 =
      dictionary_from_manifest(nlohmann::json::parse(dictionary_manifest(id).dump()));
  REQUIRE(id2.identity);
  REQUIRE((expand(id2, fresh) == expand(id, fresh)));
}

TEST_CASE("linear model round-trips through json and blob", "[io]") {
  using namespace paneldml;
  RngStream rng(23);
  VariableSetSchema schema = VariableSetSchema::make(SchemaKind::YearlyLinear);
  LinearModel m;
  m.method = Method::Lasso;
  m.dict = build_dictionary(schema, 2);
  Eigen::MatrixXd X(40, 3);
  for (int i = 0; i < X.rows(); ++i)
    for (int c = 0; c < 3; ++c) X(i, c) = rng.uniform(0.0, 50.0);
  fit_scale(m.dict, expand_raw(m.dict, X));
  m.beta.resize(m.dict.n_terms());
  for (int i = 0; i < m.beta.size(); ++i) m.beta[i] = rng.normal();
  m.year_levels = {"2001", "2002", "2003"};
  m.year_coef.resize(2);
  m.year_coef << rng.normal(), rng.normal();
  m.lambda = 0.25;
  m.in_sample_mse = 0.0375;
  m.iterations = 311;
  m.converged = false;
  m.dropped_columns = {"heat_lower", "precip"};

  auto dir = scratch_dir();
  auto jp = (dir / "linear.json").string();
  auto bp = (dir / "linear.bin").string();
  save_linear_model(m, jp, bp);
  LinearModel r = load_linear_model(jp);

  REQUIRE(r.method == m.method);
  REQUIRE((r.beta == m.beta));
  REQUIRE((r.year_coef == m.year_coef));
  REQUIRE(r.year_levels == m.year_levels);
  REQUIRE(r.lambda == m.lambda);
  REQUIRE(r.in_sample_mse == m.in_sample_mse);
  REQUIRE(r.iterations == m.iterations);
  REQUIRE(r.converged == m.converged);
  REQUIRE(r.dropped_columns == m.dropped_columns);
  REQUIRE((expand(r.dict, X) * r.beta == expand(m.dict, X) * m.beta));

  SECTION("tampered blob is rejected") {
    std::ofstream(bp, std::ios::binary | std::ios::app) << "xxxxxxxx";
    REQUIRE_THROWS_AS(load_linear_model(jp), data_error);
  }
}

TEST_CASE("nnet model round-trips and predicts identically", "[io]") {
  using namespace paneldml;
  RngStream rng(29);
  Eigen::MatrixXd X(30, 4);
  for (int i = 0; i < X.rows(); ++i)
    for (int c = 0; c < 4; ++c) X(i, c) = rng.uniform(-2.0, 2.0);
  Eigen::VectorXd y(30);
  for (int i = 0; i < y.size(); ++i) y[i] = rng.normal();
  Eigen::MatrixXd D(30, 1);
  for (int i = 0; i < 30; ++i) D(i, 0) = i % 2;
  NNetConfig cfg;
  cfg.width = 3;
  cfg.epochs = 40;
  NNetModel net = fit_nnet(X, y, D, Eigen::VectorXd::Ones(30), {"2001", "2002"}, cfg, 99);

  auto dir = scratch_dir();
  auto jp = (dir / "net.json").string();
  auto bp = (dir / "net.bin").string();
  save_nnet_model(net, jp, bp);
  NNetModel r = load_nnet_model(jp);

  REQUIRE(r.cfg.width == net.cfg.width);
  REQUIRE(r.cfg.bn_eps == net.cfg.bn_eps);
  REQUIRE(r.year_levels == net.year_levels);
  REQUIRE(r.epochs_run == net.epochs_run);
  REQUIRE(r.train_mse == net.train_mse);
  REQUIRE((r.predict(X) == net.predict(X)));
  REQUIRE((r.input_gradient(X) == net.input_gradient(X)));
}

TEST_CASE("riesz fit round-trips", "[io]") {
  using namespace paneldml;
  RngStream rng(31);
  RieszFit f;
  f.rho.resize(7);
  f.weights.resize(7);
  for (int i = 0; i < 7; ++i) {
    f.rho[i] = rng.normal();
    f.weights[i] = rng.uniform(0.5, 2.0);
  }
  f.kappa = 0.3;
  f.weight_iterations = 4;
  f.iterations = 1234;
  f.jittered = true;
  f.loss_trace = {1.5, 0.9, 0.85};

  auto dir = scratch_dir();
  auto jp = (dir / "riesz.json").string();
  save_riesz_fit(f, jp, (dir / "riesz.bin").string(), "00ff00ff00ff00ff");
  RieszFit r = load_riesz_fit(jp);
  REQUIRE((r.rho == f.rho));
  REQUIRE((r.weights == f.weights));
  REQUIRE(r.kappa == f.kappa);
  REQUIRE(r.weight_iterations == f.weight_iterations);
  REQUIRE(r.iterations == f.iterations);
  REQUIRE(r.jittered == f.jittered);
  REQUIRE(r.loss_trace == f.loss_trace);
  REQUIRE(nlohmann::json::parse(read_text_file(jp))["dictionary_hash"] == "00ff00ff00ff00ff");
}

TEST_CASE("estimate report carries the headline numbers", "[io]") {
  using namespace paneldml;
  RngStream rng(41);
  PanelDataset p = small_panel(rng, 40);

  EstimateOptions opt;
  opt.method = Method::OlsLinear;
  DebiasedEstimate est = estimate_panel(p, opt);
  nlohmann::json j = nlohmann::json::parse(estimate_report_json(est, p.schema).dump());
  REQUIRE(j["method"] == "ols_linear");
  REQUIRE(j["schema"] == "yearly_linear");
  REQUIRE(j["theta"].get<double>() == est.theta);
  REQUIRE(j["se"].get<double>() == est.se);
  REQUIRE(j["plug_in"].get<double>() == est.plug_in);
  REQUIRE(j["fold_hash"] == hex64(est.fold_hash));
  REQUIRE(j["selected"].empty());
  REQUIRE(j["per_fold"].empty());

  opt.method = Method::LassoDml;
  opt.folds = 3;
  opt.lambda_grid = {0.01};
  opt.kappa_override = {0.05};
  opt.seed = 5;
  DebiasedEstimate dml = estimate_panel(p, opt);
  nlohmann::json k = nlohmann::json::parse(estimate_report_json(dml, p.schema).dump());
  REQUIRE(k["selected"]["lambda"].get<double>() == 0.01);
  REQUIRE(k["selected"]["kappa"].get<double>() == 0.05);
  REQUIRE(k["per_fold"].size() == 3u);
  for (const auto& e : k["per_fold"]) {
    REQUIRE(e["lambda"].get<double>() == 0.01);
    REQUIRE(e["kappa"].get<double>() == 0.05);
  }
}

TEST_CASE("csv writers emit stable, parseable tables", "[io]") {
  using namespace paneldml;
  auto dir = scratch_dir();

  SECTION("covariates") {
    CovariateMatrix cov = aggregate(synth_weather(3, 2001, 2, 13),
                                    VariableSetSchema::make(SchemaKind::YearlyLinear));
    auto path = (dir / "cov.csv").string();
    write_covariates_csv(path, cov);
    CsvTable t = read_csv(path);
    REQUIRE(t.header.size() == 2 + cov.names.size());
    REQUIRE(t.header[0] == "unit_id");
    REQUIRE(t.header[1] == "year");
    REQUIRE(t.rows.size() == static_cast<std::size_t>(cov.X.rows()));
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
      REQUIRE(t.rows[i][0] == cov.unit_ids[i]);
      for (Eigen::Index j = 0; j < cov.X.cols(); ++j) {
        double v = 0;
        REQUIRE(parse_double(t.rows[i][2 + j], v));
        REQUIRE(v == cov.X(i, j));
      }
    }
    auto again = (dir / "cov2.csv").string();
    write_covariates_csv(again, cov);
    REQUIRE(read_text_file(path) == read_text_file(again));
  }

  SECTION("panel audit, summary, adaptation, bins") {
    RngStream rng(7);
    PanelDataset p = small_panel(rng, 5);
    FoldAssignment f = assign_folds(p.n_units(), 2, 3);
    auto panel_path = (dir / "panel.csv").string();
    write_panel_csv(panel_path, p, f.fold_of_unit);
    CsvTable pt = read_csv(panel_path);
    REQUIRE(pt.header[2] == "fold");
    REQUIRE(pt.header[3] == "y");
    REQUIRE(pt.rows.size() == 10u);

    SimulationResult sim;
    SimulationResult::Cell cell;
    cell.method = Method::LassoDml;
    cell.schema = SchemaKind::YearlyFlexible;
    cell.mean_theta = -0.05125;
    cell.sd_theta = 0.003;
    cell.mean_mse = 1.25;
    cell.failures = 2;
    sim.cells.push_back(cell);
    auto sim_path = (dir / "sim.csv").string();
    write_sim_summary_csv(sim_path, sim);
    CsvTable st = read_csv(sim_path);
    REQUIRE(st.header == std::vector<std::string>{"method", "schema", "mean_theta", "sd_theta",
                                                  "mse", "failures"});
    REQUIRE(st.rows[0][0] == "lasso_dml");
    REQUIRE(st.rows[0][1] == "yearly_flexible");
    REQUIRE(st.rows[0][5] == "2");
    double v = 0;
    REQUIRE(parse_double(st.rows[0][2], v));
    REQUIRE(v == -0.05125);

    AdaptationResult ad;
    ad.trials.resize(2);
    ad.trials[0].theta_sr = -0.05;
    ad.trials[0].theta_lr = -0.025;
    ad.trials[0].ratio = 0.5;
    ad.trials[1].failed = true;  // NaN row
    auto ad_path = (dir / "adapt.csv").string();
    write_adaptation_csv(ad_path, ad);
    CsvTable at = read_csv(ad_path);
    REQUIRE(at.rows.size() == 2u);
    REQUIRE(parse_double(at.rows[0][3], v));
    REQUIRE(v == 0.5);
    REQUIRE(parse_double(at.rows[1][3], v));
    REQUIRE(std::isnan(v));

    BinStudy bs;
    BinEffect present;
    present.bin_lo = 29;
    present.present = true;
    present.effect = -0.04;
    present.sd = 0.01;
    present.fit = -0.045;
    bs.bins.push_back(present);
    bs.bins.push_back(BinEffect{});  // missing bin, NaN fields
    auto bins_path = (dir / "bins.csv").string();
    write_bins_csv(bins_path, bs);
    CsvTable bt = read_csv(bins_path);
    REQUIRE(bt.header == std::vector<std::string>{"bin_lo", "effect", "sd", "fit"});
    REQUIRE(parse_double(bt.rows[0][1], v));
    REQUIRE(v == -0.04);
    REQUIRE(parse_double(bt.rows[1][1], v));
    REQUIRE(std::isnan(v));
  }
}

TEST_CASE("weather and yield loaders validate aggressively", "[io]") {
  using namespace paneldml;
  auto dir = scratch_dir();

  SECTION("clean weather file loads") {
    auto path = (dir / "w_ok.csv").string();
    write_text_file(path,
                    "unit_id,date,tmin_c,tmax_c,prec_mm\n"
                    "a,2001-03-01,5.5,15.25,0\n"
                    "a,2001-03-02,6,18,12.75\n");
    auto recs = load_daily_weather(path);
    REQUIRE(recs.size() == 2u);
    REQUIRE(recs[0].unit_id == "a");
    REQUIRE(recs[0].year == 2001);
    REQUIRE(recs[0].month == 3);
    REQUIRE(recs[0].day == 1);
    REQUIRE(recs[0].tmax_c == 15.25);
    REQUIRE(recs[1].prec_mm == 12.75);
  }

  SECTION("missing columns are all named") {
    auto path = (dir / "w_cols.csv").string();
    write_text_file(path, "unit_id,date,tmin_c\na,2001-03-01,5\n");
    try {
      load_daily_weather(path);
      FAIL("expected validation_error");
    } catch (const validation_error& e) {
      std::string msg = e.what();
      REQUIRE(msg.find("missing column: tmax_c") != std::string::npos);
      REQUIRE(msg.find("missing column: prec_mm") != std::string::npos);
      REQUIRE(e.problems.size() == 2u);
    }
  }

  SECTION("row problems are collected, not truncated") {
    auto path = (dir / "w_rows.csv").string();
    write_text_file(path,
                    "unit_id,date,tmin_c,tmax_c,prec_mm\n"
                    "a,2001-13-01,5,15,0\n"
                    "a,2001-03-02,oops,18,0\n"
                    ",2001-03-03,6,19,0\n");
    try {
      load_daily_weather(path);
      FAIL("expected validation_error");
    } catch (const validation_error& e) {
      REQUIRE(e.problems.size() == 3u);
      REQUIRE(e.problems[0].find("row 2") != std::string::npos);
      REQUIRE(e.problems[1].find("bad tmin_c") != std::string::npos);
      REQUIRE(e.problems[2].find("empty unit_id") != std::string::npos);
    }
  }

  SECTION("yields load with optional area") {
    auto path = (dir / "y_ok.csv").string();
    write_text_file(path, "unit_id,year,yield\na,2001,120.5\nb,2001,80\n");
    auto recs = load_yields(path);
    REQUIRE(recs.size() == 2u);
    REQUIRE(recs[0].yield == 120.5);
    REQUIRE(recs[0].area == 1.0);

    auto path2 = (dir / "y_area.csv").string();
    write_text_file(path2, "unit_id,year,yield,area\na,2001,120.5,330\n");
    REQUIRE(load_yields(path2)[0].area == 330.0);

    auto bad = (dir / "y_bad.csv").string();
    write_text_file(bad, "unit_id,year,yield\na,2001,-3\nb,20x1,5\n");
    try {
      load_yields(bad);
      FAIL("expected validation_error");
    } catch (const validation_error& e) {
      REQUIRE(e.problems.size() == 2u);
      REQUIRE(e.problems[0].find("positive") != std::string::npos);
      REQUIRE(e.problems[1].find("bad year") != std::string::npos);
    }
  }
}

TEST_CASE("error reports are machine readable", "[io]") {
  using namespace paneldml;
  validation_error ve({"first problem", "second problem"});
  nlohmann::json j = nlohmann::json::parse(error_report_json(ve));
  REQUIRE(j["error"] == "validation");
  REQUIRE(j["problems"].size() == 2u);
  REQUIRE(j["problems"][0] == "first problem");

  data_error de("file vanished");
  nlohmann::json k = nlohmann::json::parse(error_report_json(de));
  REQUIRE(k["error"] == "data");
  REQUIRE(k["message"] == "file vanished");

  config_error ce("bad flag");
  REQUIRE(nlohmann::json::parse(error_report_json(ce))["error"] == "config");
}

TEST_CASE("manifest records content hashes of inputs and outputs", "[io]") {
  using namespace paneldml;
  auto dir = scratch_dir();
  auto a = (dir / "in_a.txt").string();
  auto b = (dir / "out_b.txt").string();
  write_text_file(a, "alpha\n");
  write_text_file(b, "beta\n");
  nlohmann::json j = nlohmann::json::parse(manifest_json({a}, {b}).dump());
  REQUIRE(j["inputs"].size() == 1u);
  REQUIRE(j["inputs"][0]["path"] == "in_a.txt");
  REQUIRE(j["inputs"][0]["fnv1a64"] == file_hash_hex(a));
  REQUIRE(j["outputs"][0]["path"] == "out_b.txt");
  REQUIRE(j["outputs"][0]["bytes"].get<int>() == 5);
}
