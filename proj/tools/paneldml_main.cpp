// Command-line front end. Five subcommands cover the full pipeline: transform
// (daily weather -> covariates), estimate (panel -> average derivative),
// simulate (Monte Carlo over method x schema), adaptation (short-run vs
// long-run bootstrap), bins (per-bin effects + piecewise fit).
//
// Every command writes its artifacts plus run_config.json (the fully resolved
// configuration) and manifest.json (content hashes of inputs and outputs) into
// --out, prints its report JSON to stdout, and never mutates its inputs.
// Failures emit a machine-readable error report on stderr and a nonzero exit.

#include <charconv>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "paneldml/io.hpp"

namespace {

using namespace paneldml;
namespace fs = std::filesystem;

std::uint64_t effective_seed(std::uint64_t flag_seed) {
  const char* env = std::getenv("PANEL_DML_SEED");
  if (!env || !*env) return flag_seed;
  std::uint64_t v = 0;
  const char* end = env + std::strlen(env);
  auto [p, ec] = std::from_chars(env, end, v);
  if (ec != std::errc() || p != end)
    throw config_error("PANEL_DML_SEED must be an unsigned integer, got: " + std::string(env));
  return v;
}

fs::path prepare_out_dir(const std::string& out, const std::vector<std::string>& inputs) {
  fs::path dir(out);
  if (fs::exists(dir) && !fs::is_directory(dir))
    throw config_error("output path exists and is not a directory: " + out);
  fs::create_directories(dir);
  for (const auto& in : inputs)
    if (fs::equivalent(fs::absolute(fs::path(in)).parent_path(), fs::absolute(dir)))
      throw config_error("input " + in + " lives inside the output directory; choose a separate --out");
  return dir;
}

// run_config.json first so a crash while hashing still leaves the config,
// manifest.json last so it can cover every other artifact.
void finish_run(const fs::path& dir, const JsonValue& cfg, const std::vector<std::string>& inputs,
                std::vector<std::string> outputs) {
  const std::string cfg_path = (dir / "run_config.json").string();
  write_text_file(cfg_path, cfg.dump());
  outputs.push_back(cfg_path);
  write_text_file((dir / "manifest.json").string(), manifest_json(inputs, outputs).dump());
}

// Covariate-set flags shared by the commands that build or interpret schemas.
struct SchemaFlags {
  std::string name = "yearly_linear";
  int threshold = 29;
  int season_first = 3;
  int season_last = 8;
  int bins = 40;

  void attach(CLI::App* cmd, bool with_kind) {
    if (with_kind)
      cmd->add_option("--schema", name,
                      "covariate set: yearly_linear, yearly_flexible, monthly_flexible");
    cmd->add_option("--threshold", threshold, "harmful-heat threshold, deg C (default 29)");
    cmd->add_option("--season-first", season_first, "first growing-season month (default 3)");
    cmd->add_option("--season-last", season_last, "last growing-season month (default 8)");
    cmd->add_option("--bins", bins, "number of 1 C temperature bins (default 40)");
  }

  VariableSetSchema make(SchemaKind kind) const {
    std::vector<std::string> problems;
    if (season_first < 1 || season_last > 12 || season_first > season_last)
      problems.push_back("season months must satisfy 1 <= first <= last <= 12");
    if (bins < 1) problems.push_back("--bins must be positive");
    if (threshold < 0 || threshold > bins)
      problems.push_back("--threshold must lie in [0, bins]");
    if (!problems.empty()) throw validation_error(std::move(problems));
    VariableSetSchema s = VariableSetSchema::make(kind);
    s.threshold_c = threshold;
    s.season_first_month = season_first;
    s.season_last_month = season_last;
    s.n_bins = bins;
    return s;
  }

  VariableSetSchema make() const { return make(parse_schema(name)); }

  JsonValue json(const VariableSetSchema& s) const {
    JsonValue j = JsonValue::object();
    j["kind"] = schema_name(s.kind);
    j["threshold_c"] = s.threshold_c;
    j["season_first_month"] = s.season_first_month;
    j["season_last_month"] = s.season_last_month;
    j["n_bins"] = s.n_bins;
    return j;
  }
};

// Estimator flags shared by estimate, simulate, adaptation, and bins.
struct EstimateFlags {
  int folds = 5;
  int degree = 0;
  int epochs = 0;
  std::vector<double> lambda_grid;
  std::vector<int> width_grid;
  std::vector<double> kappa;

  void attach(CLI::App* cmd) {
    cmd->add_option("--folds", folds, "cross-fitting folds (default 5)");
    cmd->add_option("--degree", degree, "dictionary degree, 0 = schema default");
    cmd->add_option("--lambda-grid", lambda_grid, "comma-separated Lasso penalty grid")
        ->delimiter(',');
    cmd->add_option("--width-grid", width_grid, "comma-separated network width grid")
        ->delimiter(',');
    cmd->add_option("--kappa", kappa, "comma-separated Riesz penalty grid (default: quantile formula)")
        ->delimiter(',');
    cmd->add_option("--epochs", epochs, "network training epochs (0 = default)");
  }

  template <typename Cfg>
  void apply_grids(Cfg& o) const {
    o.folds = folds;
    if (!lambda_grid.empty()) o.lambda_grid = lambda_grid;
    if (!width_grid.empty()) o.width_grid = width_grid;
    o.kappa_override = kappa;
    if (epochs > 0) o.nnet.epochs = epochs;
  }

  template <typename Cfg>
  JsonValue json(const Cfg& o) const {
    JsonValue j = JsonValue::object();
    j["folds"] = o.folds;
    JsonValue lg = JsonValue::array(), wg = JsonValue::array(), kg = JsonValue::array();
    for (double v : o.lambda_grid) lg.push_back(v);
    for (int v : o.width_grid) wg.push_back(v);
    for (double v : o.kappa_override) kg.push_back(v);
    j["lambda_grid"] = std::move(lg);
    j["width_grid"] = std::move(wg);
    j["kappa_grid"] = std::move(kg);  // empty: per-fold quantile formula
    j["epochs"] = o.nnet.epochs;
    return j;
  }
};

JsonValue notes_json(const DropReport& rep) {
  JsonValue a = JsonValue::array();
  for (const auto& n : rep.notes) a.push_back(n);
  return a;
}

void emit(const fs::path& dir, const std::string& name, const JsonValue& report,
          std::vector<std::string>& outputs) {
  const std::string path = (dir / name).string();
  const std::string text = report.dump();
  write_text_file(path, text);
  outputs.push_back(path);
  std::cout << text;
}

// ---- transform ------------------------------------------------------------

struct TransformCmd {
  std::string weather, out;
  SchemaFlags schema;
  bool prorate = false;

  void attach(CLI::App& app) {
    auto* c = app.add_subcommand("transform", "aggregate daily weather into covariates");
    c->add_option("--weather", weather, "daily weather CSV (unit_id,date,tmin_c,tmax_c,prec_mm)")
        ->required();
    schema.attach(c, true);
    c->add_flag("--prorate-missing", prorate, "scale incomplete unit-years up instead of rejecting");
    c->add_option("--out", out, "output directory")->required();
  }

  int run() const {
    const std::vector<std::string> inputs{weather};
    fs::path dir = prepare_out_dir(out, inputs);
    VariableSetSchema s = schema.make();
    auto records = load_daily_weather(weather);
    DropReport notes;
    CovariateMatrix cov = aggregate(records, s,
                                    prorate ? MissingDayPolicy::Prorate : MissingDayPolicy::Reject,
                                    &notes);
    std::vector<std::string> outputs;
    const std::string cov_path = (dir / "covariates.csv").string();
    write_covariates_csv(cov_path, cov);
    outputs.push_back(cov_path);

    JsonValue rep = JsonValue::object();
    rep["command"] = "transform";
    rep["daily_rows"] = static_cast<std::int64_t>(records.size());
    rep["covariate_rows"] = static_cast<std::int64_t>(cov.X.rows());
    rep["columns"] = static_cast<std::int64_t>(cov.X.cols());
    rep["notes"] = notes_json(notes);
    emit(dir, "transform_report.json", rep, outputs);

    JsonValue cfg = JsonValue::object();
    cfg["command"] = "transform";
    cfg["weather"] = weather;
    cfg["schema"] = schema.json(s);
    cfg["missing_day_policy"] = prorate ? "prorate" : "reject";
    cfg["out"] = out;
    finish_run(dir, cfg, inputs, std::move(outputs));
    return 0;
  }
};

// ---- estimate ---------------------------------------------------------------

struct EstimateCmd {
  std::string panel, method = "ols_linear", out;
  SchemaFlags schema;
  EstimateFlags est;
  std::uint64_t seed = 0;
  int jobs = static_cast<int>(default_jobs());

  void attach(CLI::App& app) {
    auto* c = app.add_subcommand("estimate", "average derivative of outcome in the heat direction");
    c->add_option("--panel", panel, "panel CSV (unit_id,year,y,<covariates>)")->required();
    c->add_option("--method", method,
                  "ols_linear, ols_poly, lasso, lasso_dml, nnet, nnet_dml");
    schema.attach(c, true);
    est.attach(c);
    c->add_option("--seed", seed, "master seed (PANEL_DML_SEED overrides)");
    c->add_option("--jobs", jobs, "worker threads");
    c->add_option("--out", out, "output directory")->required();
  }

  int run() const {
    const std::vector<std::string> inputs{panel};
    fs::path dir = prepare_out_dir(out, inputs);
    VariableSetSchema s = schema.make();
    DropReport notes;
    PanelDataset p = drop_short_units(load_panel_csv(panel, s), &notes);

    EstimateOptions opt;
    opt.method = parse_method(method);
    est.apply_grids(opt);
    opt.degree = est.degree;
    opt.seed = effective_seed(seed);
    opt.jobs = jobs;
    DebiasedEstimate e = estimate_panel(p, opt);

    std::vector<std::string> outputs;
    // audit export with the fold split the estimator used
    std::vector<int> fold_of_unit;
    if (is_cross_fit(opt.method))
      fold_of_unit = assign_folds(p.n_units(), opt.folds, opt.seed).fold_of_unit;
    const std::string panel_path = (dir / "panel.csv").string();
    write_panel_csv(panel_path, p, fold_of_unit);
    outputs.push_back(panel_path);

    char buf[64];
    for (std::size_t f = 0; f < e.fold_linear.size(); ++f) {
      std::snprintf(buf, sizeof buf, "model_fold%02zu", f);
      const std::string jp = (dir / (std::string(buf) + ".json")).string();
      save_linear_model(e.fold_linear[f], jp, (dir / (std::string(buf) + ".bin")).string());
      outputs.push_back(jp);
      outputs.push_back((dir / (std::string(buf) + ".bin")).string());
    }
    for (std::size_t f = 0; f < e.fold_nets.size(); ++f) {
      std::snprintf(buf, sizeof buf, "model_fold%02zu", f);
      const std::string jp = (dir / (std::string(buf) + ".json")).string();
      save_nnet_model(e.fold_nets[f], jp, (dir / (std::string(buf) + ".bin")).string());
      outputs.push_back(jp);
      outputs.push_back((dir / (std::string(buf) + ".bin")).string());
    }
    for (std::size_t f = 0; f < e.fold_riesz.size(); ++f) {
      std::snprintf(buf, sizeof buf, "riesz_fold%02zu", f);
      const std::string jp = (dir / (std::string(buf) + ".json")).string();
      save_riesz_fit(e.fold_riesz[f], jp, (dir / (std::string(buf) + ".bin")).string());
      outputs.push_back(jp);
      outputs.push_back((dir / (std::string(buf) + ".bin")).string());
    }

    JsonValue rep = estimate_report_json(e, s);
    rep["input_notes"] = notes_json(notes);
    emit(dir, "estimate.json", rep, outputs);

    JsonValue cfg = JsonValue::object();
    cfg["command"] = "estimate";
    cfg["panel"] = panel;
    cfg["method"] = method_name(opt.method);
    cfg["schema"] = schema.json(s);
    cfg["grids"] = est.json(opt);
    cfg["degree"] = opt.degree;
    cfg["seed"] = opt.seed;
    cfg["jobs"] = jobs;
    cfg["out"] = out;
    finish_run(dir, cfg, inputs, std::move(outputs));
    return 0;
  }
};

// ---- simulate ---------------------------------------------------------------

struct SimulateCmd {
  std::string weather, out;
  std::vector<std::string> methods{"ols_linear"};
  std::vector<std::string> schemas{"yearly_linear"};
  SchemaFlags schema;  // threshold/season/bins shared by every simulated schema
  EstimateFlags est;
  int trials = 1000, counties = 1000, years = 2;
  int pool = 0, pool_years = 0, first_year = 2001;
  double noise_sd = 1.0, beta_lower = 0.02, beta_higher = -0.05, beta_prec = 0.001;
  std::uint64_t seed = 0;
  int jobs = static_cast<int>(default_jobs());

  void attach(CLI::App& app) {
    auto* c = app.add_subcommand("simulate", "Monte Carlo study over method x schema");
    c->add_option("--trials", trials, "Monte Carlo trials (default 1000)");
    c->add_option("--counties", counties, "counties drawn per trial (default 1000)");
    c->add_option("--years", years, "panel years per trial (default 2)");
    c->add_option("--methods", methods, "comma-separated estimator list")->delimiter(',');
    c->add_option("--schemas", schemas, "comma-separated covariate-set list")->delimiter(',');
    c->add_option("--weather", weather, "daily weather CSV; omit to synthesize");
    c->add_option("--pool", pool, "synthetic county pool size (default: --counties)");
    c->add_option("--pool-years", pool_years, "synthetic pool years (default: --years)");
    c->add_option("--first-year", first_year, "first synthetic year (default 2001)");
    c->add_option("--noise-sd", noise_sd, "outcome noise sd (default 1)");
    c->add_option("--beta-lower", beta_lower, "DGP coefficient on lower degree days");
    c->add_option("--beta-higher", beta_higher, "DGP coefficient on higher degree days");
    c->add_option("--beta-prec", beta_prec, "DGP coefficient on precipitation");
    schema.attach(c, false);
    est.attach(c);
    c->add_option("--seed", seed, "master seed (PANEL_DML_SEED overrides)");
    c->add_option("--jobs", jobs, "worker threads");
    c->add_option("--out", out, "output directory")->required();
  }

  int run() const {
    const std::vector<std::string> inputs =
        weather.empty() ? std::vector<std::string>{} : std::vector<std::string>{weather};
    fs::path dir = prepare_out_dir(out, inputs);
    VariableSetSchema base = schema.make(SchemaKind::YearlyLinear);

    SimulationConfig cfg;
    cfg.trials = trials;
    cfg.counties = counties;
    cfg.years = years;
    cfg.noise_sd = noise_sd;
    cfg.beta_lower = beta_lower;
    cfg.beta_higher = beta_higher;
    cfg.beta_prec = beta_prec;
    cfg.methods.clear();
    for (const auto& m : methods) cfg.methods.push_back(parse_method(m));
    cfg.schemas.clear();
    for (const auto& k : schemas) cfg.schemas.push_back(parse_schema(k));
    est.apply_grids(cfg);
    cfg.degree = est.degree;
    cfg.seed = effective_seed(seed);
    cfg.jobs = jobs;

    std::vector<DailyWeatherRecord> records;
    if (weather.empty()) {
      records = synth_weather(pool > 0 ? pool : counties, first_year,
                              pool_years > 0 ? pool_years : years, derive_seed(cfg.seed, "synth"),
                              base);
    } else {
      records = load_daily_weather(weather);
    }
    DropReport notes;
    SimWeather w = build_sim_weather(records, cfg.schemas, base, &notes);
    SimulationResult res = run_simulation(w, cfg);

    std::vector<std::string> outputs;
    const std::string sum_path = (dir / "sim_summary.csv").string();
    write_sim_summary_csv(sum_path, res);
    outputs.push_back(sum_path);

    JsonValue rep = JsonValue::object();
    rep["command"] = "simulate";
    rep["trials"] = trials;
    rep["pool_counties"] = static_cast<std::int64_t>(w.counties.size());
    rep["pool_years"] = static_cast<std::int64_t>(w.years.size());
    JsonValue cells = JsonValue::array();
    for (const auto& c : res.cells) {
      JsonValue e = JsonValue::object();
      e["method"] = method_name(c.method);
      e["schema"] = schema_name(c.schema);
      e["mean_theta"] = c.mean_theta;
      e["sd_theta"] = c.sd_theta;
      e["mean_mse"] = c.mean_mse;
      e["failures"] = c.failures;
      cells.push_back(std::move(e));
    }
    rep["cells"] = std::move(cells);
    rep["notes"] = notes_json(notes);
    emit(dir, "sim_report.json", rep, outputs);

    JsonValue jc = JsonValue::object();
    jc["command"] = "simulate";
    jc["weather"] = weather.empty() ? JsonValue(nullptr) : JsonValue(weather);
    jc["pool"] = pool > 0 ? pool : counties;
    jc["pool_years"] = pool_years > 0 ? pool_years : years;
    jc["first_year"] = first_year;
    jc["trials"] = trials;
    jc["counties"] = counties;
    jc["years"] = years;
    JsonValue jm = JsonValue::array(), js = JsonValue::array();
    for (Method m : cfg.methods) jm.push_back(method_name(m));
    for (SchemaKind k : cfg.schemas) js.push_back(schema_name(k));
    jc["methods"] = std::move(jm);
    jc["schemas"] = std::move(js);
    jc["beta_lower"] = beta_lower;
    jc["beta_higher"] = beta_higher;
    jc["beta_prec"] = beta_prec;
    jc["noise_sd"] = noise_sd;
    jc["schema_base"] = schema.json(base);
    jc["grids"] = est.json(cfg);
    jc["degree"] = cfg.degree;
    jc["seed"] = cfg.seed;
    jc["jobs"] = jobs;
    jc["out"] = out;
    finish_run(dir, jc, inputs, std::move(outputs));
    return 0;
  }
};

// ---- adaptation -------------------------------------------------------------

struct AdaptationCmd {
  std::string yields, weather, method = "ols_linear", range1, range2, out;
  SchemaFlags schema;
  EstimateFlags est;
  int trials = 500;
  double fraction = 0.8;
  bool area_weights = false, log_of_means = false, prorate = false;
  std::uint64_t seed = 0;
  int jobs = static_cast<int>(default_jobs());

  void attach(CLI::App& app) {
    auto* c = app.add_subcommand("adaptation",
                                 "bootstrap the short-run vs long-run derivative ratio");
    c->add_option("--yields", yields, "annual yields CSV (unit_id,year,yield[,area])")->required();
    c->add_option("--weather", weather, "daily weather CSV")->required();
    c->add_option("--method", method, "estimator for both panels");
    schema.attach(c, true);
    c->add_option("--range1", range1, "first long-run year range, FIRST:LAST")->required();
    c->add_option("--range2", range2, "second long-run year range, FIRST:LAST")->required();
    c->add_option("--trials", trials, "bootstrap trials (default 500)");
    c->add_option("--fraction", fraction, "unit subsample fraction (default 0.8)");
    c->add_flag("--area-weights", area_weights, "weight units by mean planted area");
    c->add_flag("--log-of-means", log_of_means,
                "long-run outcome = log of mean yields (default: mean of log yields)");
    c->add_flag("--prorate-missing", prorate, "scale incomplete unit-years up instead of rejecting");
    est.attach(c);
    c->add_option("--seed", seed, "master seed (PANEL_DML_SEED overrides)");
    c->add_option("--jobs", jobs, "worker threads");
    c->add_option("--out", out, "output directory")->required();
  }

  int run() const {
    const std::vector<std::string> inputs{yields, weather};
    fs::path dir = prepare_out_dir(out, inputs);
    VariableSetSchema s = schema.make();
    auto records = load_daily_weather(weather);
    auto ytab = load_yields(yields);
    DropReport notes;
    CovariateMatrix cov = aggregate(records, s,
                                    prorate ? MissingDayPolicy::Prorate : MissingDayPolicy::Reject,
                                    &notes);
    PanelDataset sr = drop_short_units(make_short_run(ytab, cov, area_weights, &notes), &notes);
    PanelDataset lr = make_long_run(ytab, cov, parse_year_range(range1), parse_year_range(range2),
                                    log_of_means ? LongRunOutcome::LogOfMeans
                                                 : LongRunOutcome::MeanOfLogs,
                                    area_weights, &notes);

    AdaptationConfig acfg;
    acfg.trials = trials;
    acfg.fraction = fraction;
    acfg.estimate.method = parse_method(method);
    est.apply_grids(acfg.estimate);
    acfg.estimate.degree = est.degree;
    acfg.estimate.jobs = 1;  // parallelism lives at the trial level
    acfg.seed = effective_seed(seed);
    acfg.jobs = jobs;
    AdaptationResult res = run_adaptation(sr, lr, acfg);

    std::vector<std::string> outputs;
    const std::string csv_path = (dir / "adaptation.csv").string();
    write_adaptation_csv(csv_path, res);
    outputs.push_back(csv_path);

    JsonValue rep = adaptation_report_json(res);
    rep["notes"] = notes_json(notes);
    emit(dir, "adaptation_report.json", rep, outputs);

    JsonValue cfg = JsonValue::object();
    cfg["command"] = "adaptation";
    cfg["yields"] = yields;
    cfg["weather"] = weather;
    cfg["method"] = method_name(acfg.estimate.method);
    cfg["schema"] = schema.json(s);
    cfg["range1"] = range1;
    cfg["range2"] = range2;
    cfg["trials"] = trials;
    cfg["fraction"] = fraction;
    cfg["area_weights"] = area_weights;
    cfg["long_run_outcome"] = log_of_means ? "log_of_means" : "mean_of_logs";
    cfg["missing_day_policy"] = prorate ? "prorate" : "reject";
    cfg["grids"] = est.json(acfg.estimate);
    cfg["degree"] = acfg.estimate.degree;
    cfg["seed"] = acfg.seed;
    cfg["jobs"] = jobs;
    cfg["out"] = out;
    finish_run(dir, cfg, inputs, std::move(outputs));
    return 0;
  }
};

// ---- bins ---------------------------------------------------------------

struct BinsCmd {
  std::string panel, method = "ols_linear", out;
  SchemaFlags schema;
  EstimateFlags est;
  std::uint64_t seed = 0;
  int jobs = static_cast<int>(default_jobs());

  void attach(CLI::App& app) {
    auto* c = app.add_subcommand("bins", "per-bin effects and piecewise-linear fit");
    c->add_option("--panel", panel, "panel CSV under the yearly flexible covariate set")
        ->required();
    c->add_option("--method", method, "estimator for every per-bin direction");
    schema.attach(c, false);  // schema kind is pinned to yearly_flexible
    est.attach(c);
    c->add_option("--seed", seed, "master seed (PANEL_DML_SEED overrides)");
    c->add_option("--jobs", jobs, "worker threads");
    c->add_option("--out", out, "output directory")->required();
  }

  int run() const {
    const std::vector<std::string> inputs{panel};
    fs::path dir = prepare_out_dir(out, inputs);
    VariableSetSchema s = schema.make(SchemaKind::YearlyFlexible);
    DropReport notes;
    PanelDataset p = drop_short_units(load_panel_csv(panel, s), &notes);

    EstimateOptions opt;
    opt.method = parse_method(method);
    est.apply_grids(opt);
    opt.degree = est.degree;
    opt.seed = effective_seed(seed);
    opt.jobs = jobs;
    BinStudy study = bin_coefficients(p, opt);

    std::vector<std::string> outputs;
    const std::string csv_path = (dir / "bins.csv").string();
    write_bins_csv(csv_path, study);
    outputs.push_back(csv_path);

    JsonValue rep = JsonValue::object();
    rep["command"] = "bins";
    rep["knee_c"] = study.fit.knee;
    rep["level_at_knee"] = study.fit.level;
    rep["slope_below"] = study.fit.slope_lo;
    rep["slope_above"] = study.fit.slope_hi;
    JsonValue missing = JsonValue::array();
    int present = 0;
    for (const auto& b : study.bins) {
      if (b.present)
        ++present;
      else
        missing.push_back(b.bin_lo);
    }
    rep["bins_present"] = present;
    rep["bins_missing"] = std::move(missing);
    rep["notes"] = notes_json(notes);
    emit(dir, "bins_report.json", rep, outputs);

    JsonValue cfg = JsonValue::object();
    cfg["command"] = "bins";
    cfg["panel"] = panel;
    cfg["method"] = method_name(opt.method);
    cfg["schema"] = schema.json(s);
    cfg["grids"] = est.json(opt);
    cfg["degree"] = opt.degree;
    cfg["seed"] = opt.seed;
    cfg["jobs"] = jobs;
    cfg["out"] = out;
    finish_run(dir, cfg, inputs, std::move(outputs));
    return 0;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"panel average-derivative toolkit: debiased machine learning for weather panels"};
  app.require_subcommand(1);

  TransformCmd transform;
  EstimateCmd estimate;
  SimulateCmd simulate;
  AdaptationCmd adaptation;
  BinsCmd bins;
  transform.attach(app);
  estimate.attach(app);
  simulate.attach(app);
  adaptation.attach(app);
  bins.attach(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << paneldml::error_report_json(paneldml::validation_error({e.what()}));
    return 2;
  }

  try {
    if (app.got_subcommand("transform")) return transform.run();
    if (app.got_subcommand("estimate")) return estimate.run();
    if (app.got_subcommand("simulate")) return simulate.run();
    if (app.got_subcommand("adaptation")) return adaptation.run();
    return bins.run();
  } catch (const std::exception& e) {
    std::cerr << paneldml::error_report_json(e);
    return 1;
  }
}
