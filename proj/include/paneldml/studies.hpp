#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "paneldml/dml.hpp"
#include "paneldml/weather.hpp"

namespace paneldml {

// Synthetic daily weather for the season months: per county a latent mean
// season temperature ~ N(22, 3^2) and an annual sinusoid whose window mean is
// removed so the latent mean is honest, plus AR(1) daily noise (phi 0.7,
// innovation sd 3). The diurnal range is U(8, 12) and precipitation is
// Bernoulli(0.3) * Gamma(2, 4) mm. Counties get independent substreams, so
// the stream is deterministic under (seed, county index).
inline std::vector<DailyWeatherRecord> synth_weather(int counties, int first_year, int years,
                                                     std::uint64_t seed,
                                                     const VariableSetSchema& schema = {}) {
  const double phi = 0.7, innov_sd = 3.0;
  const int m0 = schema.season_first_month, m1 = schema.season_last_month;
  std::vector<DailyWeatherRecord> out;
  for (int c = 0; c < counties; ++c) {
    RngStream rng(derive_seed(seed, "weather", static_cast<std::uint64_t>(c)));
    char buf[16];
    std::snprintf(buf, sizeof buf, "c%05d", c);
    const std::string id = buf;
    const double mean_t = rng.normal(22.0, 3.0);
    const double amp = rng.uniform(5.0, 10.0);

    // window mean of the annual sinusoid over the season, removed below
    double cyc_sum = 0;
    int cyc_n = 0;
    for (int m = m0; m <= m1; ++m) {
      int doy0 = 0;
      for (int mm = 1; mm < m; ++mm) doy0 += days_in_month(2001, mm);
      for (int d = 0; d < days_in_month(2001, m); ++d, ++cyc_n)
        cyc_sum += std::sin(2.0 * M_PI * (doy0 + d - 80) / 365.0);
    }
    const double cyc_mean = cyc_sum / cyc_n;

    double ar = 0;
    for (int y = first_year; y < first_year + years; ++y) {
      for (int m = m0; m <= m1; ++m) {
        int doy0 = 0;
        for (int mm = 1; mm < m; ++mm) doy0 += days_in_month(y, mm);
        for (int d = 1; d <= days_in_month(y, m); ++d) {
          ar = phi * ar + rng.normal(0.0, innov_sd);
          double mid = mean_t + amp * (std::sin(2.0 * M_PI * (doy0 + d - 1 - 80) / 365.0) - cyc_mean) + ar;
          double range = rng.uniform(8.0, 12.0);
          double prec = rng.bernoulli(0.3) ? rng.gamma(2.0, 4.0) : 0.0;
          out.push_back({id, y, m, d, mid - range / 2.0, mid + range / 2.0, prec});
        }
      }
    }
  }
  return out;
}

// Covariates per (county, year) under every schema a study needs, indexed as
// county * n_years + year_index. The linear set (lower, higher, prec) is
// always present because the outcome model is defined on it. Counties missing
// any (county, year) cell under any schema are dropped and reported.
struct SimWeather {
  std::vector<std::string> counties;
  std::vector<int> years;
  std::map<SchemaKind, Eigen::MatrixXd> X;
  Eigen::MatrixXd lin;  // YearlyLinear columns: lower, higher, prec

  int n_counties() const { return static_cast<int>(counties.size()); }
  int n_years() const { return static_cast<int>(years.size()); }
};

inline SimWeather build_sim_weather(const std::vector<DailyWeatherRecord>& records,
                                    std::vector<SchemaKind> schemas,
                                    const VariableSetSchema& base = {},
                                    DropReport* report = nullptr) {
  if (std::find(schemas.begin(), schemas.end(), SchemaKind::YearlyLinear) == schemas.end())
    schemas.push_back(SchemaKind::YearlyLinear);

  std::map<SchemaKind, CovariateMatrix> cov;
  std::map<std::string, std::map<int, std::map<SchemaKind, int>>> rows;  // county -> year -> rows
  std::map<int, int> year_count;
  for (SchemaKind k : schemas) {
    VariableSetSchema s = base;
    s.kind = k;
    CovariateMatrix m = aggregate(records, s, MissingDayPolicy::Reject, report);
    for (int i = 0; i < m.X.rows(); ++i)
      rows[m.unit_ids[i]][std::stoi(m.period[i])][k] = i;
    cov[k] = std::move(m);
  }

  SimWeather w;
  std::set<int> years_seen;
  for (const auto& [cty, by_year] : rows)
    for (const auto& [y, by_schema] : by_year) years_seen.insert(y);
  w.years.assign(years_seen.begin(), years_seen.end());
  if (w.years.empty()) throw data_error("weather records produced no covariates");

  for (const auto& [cty, by_year] : rows) {
    bool full = true;
    for (int y : w.years) {
      auto it = by_year.find(y);
      if (it == by_year.end() || it->second.size() != schemas.size()) full = false;
    }
    if (full) {
      w.counties.push_back(cty);
    } else if (report) {
      report->add("county " + cty + " dropped: incomplete weather coverage");
    }
  }
  if (w.counties.empty()) throw data_error("no county has complete weather coverage");

  const int ny = static_cast<int>(w.years.size());
  for (SchemaKind k : schemas) {
    Eigen::MatrixXd M(static_cast<Eigen::Index>(w.counties.size()) * ny, cov[k].X.cols());
    for (std::size_t c = 0; c < w.counties.size(); ++c)
      for (int yi = 0; yi < ny; ++yi)
        M.row(static_cast<Eigen::Index>(c) * ny + yi) =
            cov[k].X.row(rows[w.counties[c]][w.years[yi]][k]);
    if (k == SchemaKind::YearlyLinear) w.lin = M;
    w.X[k] = std::move(M);
  }
  return w;
}

struct SimulationConfig {
  int trials = 1000;
  int counties = 1000;
  int years = 2;
  double beta_lower = 0.02;
  double beta_higher = -0.05;
  double beta_prec = 0.001;
  double noise_sd = 1.0;    // eps; a_i is always N(1,1)
  std::vector<Method> methods{Method::OlsLinear};
  std::vector<SchemaKind> schemas{SchemaKind::YearlyLinear};
  int folds = 5;
  int degree = 0;  // dictionary degree, 0 = schema default
  std::vector<double> lambda_grid = default_lambda_grid();
  std::vector<int> width_grid = default_width_grid();
  std::vector<double> kappa_override;
  NNetConfig nnet;
  FistaOptions fista;
  std::uint64_t seed = 0;
  int jobs = 1;
};

struct SimulationResult {
  struct Cell {
    Method method = Method::OlsLinear;
    SchemaKind schema = SchemaKind::YearlyLinear;
    std::vector<double> thetas;  // successful trials, in trial order
    std::vector<double> mses;    // matching test mse
    int failures = 0;
    double mean_theta = 0;
    double sd_theta = 0;   // sample sd over successes
    double mean_mse = 0;
  };
  std::vector<Cell> cells;  // method-major over cfg.methods x cfg.schemas
  int trials = 0;
};

namespace detail {

inline PanelDataset sim_panel(const SimWeather& w, const VariableSetSchema& schema,
                              const Eigen::MatrixXd& Xs, const std::vector<int>& county_draw,
                              int year_start, int years, const Eigen::VectorXd& y) {
  PanelDataset p;
  p.schema = schema;
  p.covariate_names = schema.covariate_names();
  const int n = static_cast<int>(county_draw.size()) * years;
  p.X.resize(n, Xs.cols());
  p.y = y;
  p.unit_weight = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(county_draw.size()));
  int r = 0;
  for (std::size_t j = 0; j < county_draw.size(); ++j) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "u%05d", static_cast<int>(j));
    p.unit_ids.push_back(buf);
    for (int t = 0; t < years; ++t, ++r) {
      p.row_unit.push_back(static_cast<int>(j));
      p.row_period.push_back(std::to_string(w.years[year_start + t]));
      p.X.row(r) = Xs.row(static_cast<Eigen::Index>(county_draw[j]) * w.n_years() + year_start + t);
    }
  }
  return p;
}

}  // namespace detail

// Monte Carlo: each trial resamples counties with replacement, picks a
// consecutive year window, builds y = a_i + b1 lower + b2 higher + b3 prec
// + eps on the linear covariates, and runs every (method x schema) estimate
// on the same drawn data. The true average derivative along the estimation
// direction is b2 in every trial. Failed estimates are counted and excluded.
inline SimulationResult run_simulation(const SimWeather& w, const SimulationConfig& cfg) {
  if (cfg.trials <= 0 || cfg.counties <= 0) throw config_error("trials and counties must be positive");
  if (w.n_years() < cfg.years) throw data_error("weather pool spans fewer years than a trial panel");
  for (SchemaKind k : cfg.schemas)
    if (!w.X.count(k)) throw config_error("weather pool lacks schema " + schema_name(k));

  const std::size_t n_cells = cfg.methods.size() * cfg.schemas.size();
  struct TrialOut {
    std::vector<double> theta, mse;  // NaN = failed
  };
  std::vector<TrialOut> per_trial(cfg.trials);

  parallel_for(static_cast<std::size_t>(cfg.trials), static_cast<unsigned>(cfg.jobs),
               [&](std::size_t t) {
    RngStream rng(derive_seed(cfg.seed, "trial", t));
    const int year_start =
        static_cast<int>(rng.bounded(static_cast<std::uint64_t>(w.n_years() - cfg.years + 1)));
    std::vector<int> draw(cfg.counties);
    for (int& d : draw) d = static_cast<int>(rng.bounded(static_cast<std::uint64_t>(w.n_counties())));

    Eigen::VectorXd y(static_cast<Eigen::Index>(cfg.counties) * cfg.years);
    int r = 0;
    for (int j = 0; j < cfg.counties; ++j) {
      double a = rng.normal(1.0, 1.0);
      for (int yt = 0; yt < cfg.years; ++yt, ++r) {
        const auto row = w.lin.row(static_cast<Eigen::Index>(draw[j]) * w.n_years() + year_start + yt);
        y[r] = a + cfg.beta_lower * row[0] + cfg.beta_higher * row[1] + cfg.beta_prec * row[2] +
               (cfg.noise_sd > 0 ? rng.normal(0.0, cfg.noise_sd) : 0.0);
      }
    }

    auto& res = per_trial[t];
    res.theta.assign(n_cells, std::numeric_limits<double>::quiet_NaN());
    res.mse.assign(n_cells, std::numeric_limits<double>::quiet_NaN());
    std::size_t cell = 0;
    for (Method method : cfg.methods) {
      for (SchemaKind sk : cfg.schemas) {
        VariableSetSchema schema = VariableSetSchema::make(sk);
        PanelDataset p = detail::sim_panel(w, schema, w.X.at(sk), draw, year_start, cfg.years, y);
        EstimateOptions opt;
        opt.method = method;
        opt.folds = cfg.folds;
        opt.degree = cfg.degree;
        opt.lambda_grid = cfg.lambda_grid;
        opt.width_grid = cfg.width_grid;
        opt.kappa_override = cfg.kappa_override;
        opt.nnet = cfg.nnet;
        opt.fista = cfg.fista;
        opt.seed = derive_seed(cfg.seed, "est", t);
        try {
          DebiasedEstimate est = estimate_panel(p, opt);
          res.theta[cell] = est.theta;
          res.mse[cell] = est.test_mse;
        } catch (const error&) {
          // recorded as a failed trial for this cell
        }
        ++cell;
      }
    }
  });

  SimulationResult out;
  out.trials = cfg.trials;
  std::size_t cell = 0;
  for (Method method : cfg.methods) {
    for (SchemaKind sk : cfg.schemas) {
      SimulationResult::Cell c;
      c.method = method;
      c.schema = sk;
      for (int t = 0; t < cfg.trials; ++t) {
        double th = per_trial[t].theta[cell];
        if (std::isnan(th)) {
          ++c.failures;
        } else {
          c.thetas.push_back(th);
          c.mses.push_back(per_trial[t].mse[cell]);
        }
      }
      const auto n = static_cast<double>(c.thetas.size());
      if (n > 0) {
        for (double v : c.thetas) c.mean_theta += v;
        c.mean_theta /= n;
        for (double v : c.mses) c.mean_mse += v;
        c.mean_mse /= n;
        if (n > 1) {
          double ss = 0;
          for (double v : c.thetas) ss += (v - c.mean_theta) * (v - c.mean_theta);
          c.sd_theta = std::sqrt(ss / (n - 1.0));
        }
      }
      out.cells.push_back(std::move(c));
      ++cell;
    }
  }
  return out;
}

struct AdaptationConfig {
  int trials = 500;
  double fraction = 0.8;  // units per subsample, drawn without replacement
  double sr_guard = 1e-8;
  EstimateOptions estimate;
  std::uint64_t seed = 0;
  int jobs = 1;
};

struct AdaptationResult {
  struct Trial {
    double theta_sr = std::numeric_limits<double>::quiet_NaN();
    double theta_lr = std::numeric_limits<double>::quiet_NaN();
    double ratio = std::numeric_limits<double>::quiet_NaN();
    bool failed = false;
    bool sr_near_zero = false;
  };
  std::vector<Trial> trials;
  int n_ok = 0;
  int n_failed = 0;
  int n_guarded = 0;       // |theta_sr| under the guard; excluded from stats
  double mean_ratio = 0;
  double sd_ratio = 0;     // sample sd
  double p_value = 1;      // one-sided: fraction of ratios <= 0
  double p_bonferroni = 1; // reporting-time correction, factor 3
  double ci_lo = 0, ci_hi = 0;
};

// Bootstrap comparison of short-run and long-run average derivatives on a
// shared unit universe: each trial subsamples the common units, estimates
// both panels, and records 1 - theta_lr / theta_sr.
inline AdaptationResult run_adaptation(const PanelDataset& sr, const PanelDataset& lr,
                                       const AdaptationConfig& cfg) {
  if (cfg.fraction <= 0 || cfg.fraction > 1) throw config_error("subsample fraction must be in (0, 1]");
  std::map<std::string, int> lr_idx;
  for (std::size_t i = 0; i < lr.unit_ids.size(); ++i) lr_idx[lr.unit_ids[i]] = static_cast<int>(i);
  std::vector<std::pair<int, int>> common;  // (sr unit index, lr unit index)
  for (std::size_t i = 0; i < sr.unit_ids.size(); ++i) {
    auto it = lr_idx.find(sr.unit_ids[i]);
    if (it != lr_idx.end()) common.emplace_back(static_cast<int>(i), it->second);
  }
  if (common.size() < 2) throw data_error("fewer than two units shared by both panels");

  AdaptationResult out;
  out.trials.resize(cfg.trials);
  parallel_for(static_cast<std::size_t>(cfg.trials), static_cast<unsigned>(cfg.jobs),
               [&](std::size_t t) {
    auto& tr = out.trials[t];
    std::vector<int> pick = bootstrap_subsample(static_cast<int>(common.size()), cfg.fraction,
                                                derive_seed(cfg.seed, "boot", t));
    std::vector<int> sr_units, lr_units;
    for (int j : pick) {
      sr_units.push_back(common[j].first);
      lr_units.push_back(common[j].second);
    }
    try {
      EstimateOptions opt = cfg.estimate;
      opt.seed = derive_seed(cfg.seed, "sr", t);
      tr.theta_sr = estimate_panel(subset_units(sr, sr_units), opt).theta;
      opt.seed = derive_seed(cfg.seed, "lr", t);
      tr.theta_lr = estimate_panel(subset_units(lr, lr_units), opt).theta;
    } catch (const error&) {
      tr.failed = true;
      return;
    }
    if (std::abs(tr.theta_sr) < cfg.sr_guard) {
      tr.sr_near_zero = true;
      return;
    }
    tr.ratio = 1.0 - tr.theta_lr / tr.theta_sr;
  });

  std::vector<double> ratios;
  for (const auto& tr : out.trials) {
    if (tr.failed) {
      ++out.n_failed;
    } else if (tr.sr_near_zero) {
      ++out.n_guarded;
    } else {
      ratios.push_back(tr.ratio);
    }
  }
  out.n_ok = static_cast<int>(ratios.size());
  if (out.n_ok > 0) {
    int nonpos = 0;
    for (double r : ratios) {
      out.mean_ratio += r;
      if (r <= 0) ++nonpos;
    }
    out.mean_ratio /= out.n_ok;
    if (out.n_ok > 1) {
      double ss = 0;
      for (double r : ratios) ss += (r - out.mean_ratio) * (r - out.mean_ratio);
      out.sd_ratio = std::sqrt(ss / (out.n_ok - 1.0));
    }
    out.p_value = static_cast<double>(nonpos) / out.n_ok;
    out.p_bonferroni = std::min(1.0, 3.0 * out.p_value);
    out.ci_lo = out.mean_ratio - 1.96 * out.sd_ratio;
    out.ci_hi = out.mean_ratio + 1.96 * out.sd_ratio;
  }
  return out;
}

// Continuous piecewise-linear least squares with a fixed knee:
//   f(c) = level + slope_lo * min(c - knee, 0) + slope_hi * max(c - knee, 0).
struct PiecewiseFit {
  double knee = 29;
  double level = 0;     // value at the knee
  double slope_lo = 0;  // below the knee
  double slope_hi = 0;  // above

  double value(double c) const {
    return level + slope_lo * std::min(c - knee, 0.0) + slope_hi * std::max(c - knee, 0.0);
  }
};

inline PiecewiseFit fit_piecewise_knee(const std::vector<double>& c, const std::vector<double>& v,
                                       double knee = 29.0) {
  if (c.size() != v.size()) throw config_error("piecewise fit inputs differ in length");
  if (c.empty()) throw data_error("piecewise fit needs at least one point");
  const auto n = static_cast<Eigen::Index>(c.size());
  Eigen::MatrixXd A(n, 3);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    A(i, 0) = 1.0;
    A(i, 1) = std::min(c[i] - knee, 0.0);
    A(i, 2) = std::max(c[i] - knee, 0.0);
    y[i] = v[i];
  }
  OlsSolution s = solve_ols(A, y);
  PiecewiseFit f;
  f.knee = knee;
  f.level = s.coef[0];
  f.slope_lo = s.coef[1];
  f.slope_hi = s.coef[2];
  return f;
}

struct BinEffect {
  int bin_lo = 0;
  bool present = false;  // false: the bin has no exposure anywhere in the data
  double effect = std::numeric_limits<double>::quiet_NaN();
  double sd = std::numeric_limits<double>::quiet_NaN();
  double fit = std::numeric_limits<double>::quiet_NaN();
};

struct BinStudy {
  std::vector<BinEffect> bins;
  PiecewiseFit fit;
};

// Per-bin average derivative: one estimate per heat bin with the direction
// fixed to that bin's unit vector. Empty bins are reported but excluded from
// the piecewise fit.
inline BinStudy bin_coefficients(const PanelDataset& panel, const EstimateOptions& base) {
  if (panel.schema.kind != SchemaKind::YearlyFlexible)
    throw config_error("bin analysis requires the yearly flexible covariate set");
  const auto cols = panel.schema.columns();
  BinStudy out;
  std::vector<double> xs, vs;
  for (int j = 0; j < static_cast<int>(cols.size()); ++j) {
    if (cols[j].role != ColumnInfo::Role::HeatBin) continue;
    BinEffect b;
    b.bin_lo = cols[j].bin_lo;
    if ((panel.X.col(j).array() != 0.0).any()) {
      EstimateOptions opt = base;
      opt.direction = Direction::unit_column(j);
      DebiasedEstimate est = estimate_panel(panel, opt);
      b.present = true;
      b.effect = est.theta;
      b.sd = est.se;
      xs.push_back(b.bin_lo);
      vs.push_back(b.effect);
    }
    out.bins.push_back(b);
  }
  if (!xs.empty()) {
    out.fit = fit_piecewise_knee(xs, vs, panel.schema.threshold_c);
    for (auto& b : out.bins)
      if (b.present) b.fit = out.fit.value(b.bin_lo);
  }
  return out;
}

}  // namespace paneldml
