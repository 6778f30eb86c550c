#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "paneldml/common.hpp"
#include "paneldml/csv.hpp"

namespace paneldml {

enum class SchemaKind { YearlyLinear, YearlyFlexible, MonthlyFlexible };

inline std::string schema_name(SchemaKind k) {
  switch (k) {
    case SchemaKind::YearlyLinear: return "yearly_linear";
    case SchemaKind::YearlyFlexible: return "yearly_flexible";
    case SchemaKind::MonthlyFlexible: return "monthly_flexible";
  }
  return "?";
}

inline SchemaKind parse_schema(const std::string& s) {
  if (s == "yearly_linear") return SchemaKind::YearlyLinear;
  if (s == "yearly_flexible") return SchemaKind::YearlyFlexible;
  if (s == "monthly_flexible") return SchemaKind::MonthlyFlexible;
  throw config_error("unknown schema: " + s);
}

// Role of one covariate column. month is 0 for yearly schemas.
struct ColumnInfo {
  enum class Role { Lower, Higher, HeatBin, Precip };
  Role role;
  int bin_lo = -1;
  int month = 0;
};

struct VariableSetSchema {
  SchemaKind kind = SchemaKind::YearlyLinear;
  int threshold_c = 29;
  int season_first_month = 3;  // March
  int season_last_month = 8;   // August
  int n_bins = 40;             // 1 C bins [0,1) .. [39,40); exposure above 40 folds into the top bin

  static VariableSetSchema make(SchemaKind k) {
    VariableSetSchema s;
    s.kind = k;
    return s;
  }

  int n_season_months() const { return season_last_month - season_first_month + 1; }

  std::vector<ColumnInfo> columns() const {
    std::vector<ColumnInfo> cols;
    switch (kind) {
      case SchemaKind::YearlyLinear:
        cols.push_back({ColumnInfo::Role::Lower, -1, 0});
        cols.push_back({ColumnInfo::Role::Higher, -1, 0});
        cols.push_back({ColumnInfo::Role::Precip, -1, 0});
        break;
      case SchemaKind::YearlyFlexible:
        for (int b = 0; b < n_bins; ++b) cols.push_back({ColumnInfo::Role::HeatBin, b, 0});
        cols.push_back({ColumnInfo::Role::Precip, -1, 0});
        break;
      case SchemaKind::MonthlyFlexible:
        for (int m = season_first_month; m <= season_last_month; ++m) {
          for (int b = 0; b < n_bins; ++b) cols.push_back({ColumnInfo::Role::HeatBin, b, m});
          cols.push_back({ColumnInfo::Role::Precip, -1, m});
        }
        break;
    }
    return cols;
  }

  std::vector<std::string> covariate_names() const {
    std::vector<std::string> names;
    for (const auto& c : columns()) {
      std::string prefix;
      if (c.month > 0) {
        char buf[16];
        std::snprintf(buf, sizeof buf, "m%02d_", c.month);
        prefix = buf;
      }
      switch (c.role) {
        case ColumnInfo::Role::Lower: names.push_back(prefix + "lower"); break;
        case ColumnInfo::Role::Higher: names.push_back(prefix + "higher"); break;
        case ColumnInfo::Role::Precip: names.push_back(prefix + "prec"); break;
        case ColumnInfo::Role::HeatBin: {
          char buf[32];
          std::snprintf(buf, sizeof buf, "%sbin_%02d", prefix.c_str(), c.bin_lo);
          names.push_back(buf);
          break;
        }
      }
    }
    return names;
  }

  int dimension() const { return static_cast<int>(columns().size()); }
};

// Degree days above c for one day, with temperature interpolated between tmin
// and tmax by a single sine cycle: T(h) = m + a sin(2 pi h / 24).
// Integrating max(T - c, 0) over the cycle gives
//   ((m - c)(pi/2 - phi) + a cos phi) / pi,  phi = asin((c - m)/a).
inline double degree_days_above(double tmin, double tmax, double c) {
  if (tmin > tmax) throw data_error("tmin exceeds tmax");
  double m = 0.5 * (tmin + tmax);
  double a = 0.5 * (tmax - tmin);
  if (c <= m - a) return m - c;
  if (c >= m + a) return 0.0;
  double phi = std::asin((c - m) / a);
  constexpr double pi = 3.14159265358979323846;
  return ((m - c) * (0.5 * pi - phi) + a * std::cos(phi)) / pi;
}

// Exposure within [bin_lo, bin_lo + 1): the day's time-average of
// clamp(T(h) - bin_lo, 0, 1). Always in [0, 1].
inline double daily_bin_exposure(double tmin, double tmax, int bin_lo) {
  if (bin_lo < 0 || bin_lo >= 40) throw schema_error("bin index out of range: " + std::to_string(bin_lo));
  double v = degree_days_above(tmin, tmax, bin_lo) - degree_days_above(tmin, tmax, bin_lo + 1.0);
  return std::clamp(v, 0.0, 1.0);
}

struct DailyWeatherRecord {
  std::string unit_id;
  int year = 0;
  int month = 0;
  int day = 0;
  double tmin_c = 0;
  double tmax_c = 0;
  double prec_mm = 0;
};

inline bool is_leap(int y) { return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0; }

inline int days_in_month(int year, int month) {
  static const int d[12] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  if (month < 1 || month > 12) throw data_error("month out of range: " + std::to_string(month));
  if (month == 2 && is_leap(year)) return 29;
  return d[month - 1];
}

// "YYYY-MM-DD"
inline void parse_iso_date(const std::string& s, int& y, int& m, int& d) {
  if (s.size() != 10 || s[4] != '-' || s[7] != '-')
    throw data_error("bad date (expected YYYY-MM-DD): " + s);
  auto num = [&](int off, int len) {
    int v = 0;
    for (int i = off; i < off + len; ++i) {
      if (s[i] < '0' || s[i] > '9') throw data_error("bad date (expected YYYY-MM-DD): " + s);
      v = v * 10 + (s[i] - '0');
    }
    return v;
  };
  y = num(0, 4);
  m = num(5, 2);
  d = num(8, 2);
  if (m < 1 || m > 12 || d < 1 || d > days_in_month(y, m))
    throw data_error("invalid calendar date: " + s);
}

// Season covariates per (unit, period). Periods are year labels, or range
// labels after long-run averaging. Rows are sorted by (unit, period).
struct CovariateMatrix {
  VariableSetSchema schema;
  std::vector<std::string> unit_ids;  // per row
  std::vector<std::string> period;    // per row
  Eigen::MatrixXd X;
  std::vector<std::string> names;
};

enum class MissingDayPolicy { Reject, Prorate };

namespace detail {
struct SeasonAccum {
  // per month: 40 bins + precip total + day count; months indexed from season start
  std::vector<Eigen::ArrayXd> bins;
  std::vector<double> prec;
  std::vector<int> days;
};
}  // namespace detail

// Aggregates daily records into the schema's covariates. Days outside the
// season months are ignored. A (unit, year) missing season days is rejected or
// prorated by expected/observed day count, per policy.
inline CovariateMatrix aggregate(const std::vector<DailyWeatherRecord>& records,
                                 const VariableSetSchema& schema,
                                 MissingDayPolicy policy = MissingDayPolicy::Reject,
                                 DropReport* report = nullptr) {
  const int m0 = schema.season_first_month;
  const int m1 = schema.season_last_month;
  const int nm = schema.n_season_months();
  const int nb = schema.n_bins;

  std::map<std::pair<std::string, int>, detail::SeasonAccum> acc;
  std::map<std::pair<std::string, int>, std::vector<std::uint8_t>> seen;  // per-day dedup

  for (const auto& r : records) {
    if (r.tmin_c > r.tmax_c)
      throw data_error("tmin exceeds tmax for unit " + r.unit_id + " on " +
                       std::to_string(r.year) + "-" + std::to_string(r.month) + "-" +
                       std::to_string(r.day));
    if (r.month < m0 || r.month > m1) continue;
    auto key = std::make_pair(r.unit_id, r.year);
    auto& a = acc[key];
    if (a.bins.empty()) {
      a.bins.assign(nm, Eigen::ArrayXd::Zero(nb));
      a.prec.assign(nm, 0.0);
      a.days.assign(nm, 0);
    }
    auto& sv = seen[key];
    if (sv.empty()) sv.assign(366, 0);
    int doy = 0;
    for (int m = 1; m < r.month; ++m) doy += days_in_month(r.year, m);
    doy += r.day - 1;
    if (sv[doy]) throw data_error("duplicate record for unit " + r.unit_id + " on " +
                                  std::to_string(r.year) + "-" + std::to_string(r.month) + "-" +
                                  std::to_string(r.day));
    sv[doy] = 1;
    int mi = r.month - m0;
    // one pass over thresholds gives every bin; exposure above 40 folds into bin 39
    double prev = degree_days_above(r.tmin_c, r.tmax_c, 0.0);
    for (int b = 0; b < nb - 1; ++b) {
      double next = degree_days_above(r.tmin_c, r.tmax_c, b + 1.0);
      a.bins[mi][b] += std::max(prev - next, 0.0);
      prev = next;
    }
    a.bins[mi][nb - 1] += prev;  // [39, 40) plus everything above 40
    a.prec[mi] += r.prec_mm;
    a.days[mi] += 1;
  }

  const auto cols = schema.columns();
  const int p = static_cast<int>(cols.size());
  std::vector<std::string> units, periods;
  std::vector<Eigen::VectorXd> rows;

  for (auto& [key, a] : acc) {
    int expected = 0, observed = 0;
    for (int m = m0; m <= m1; ++m) expected += days_in_month(key.second, m);
    for (int d : a.days) observed += d;
    std::vector<double> scale(nm, 1.0);
    if (observed < expected) {
      if (policy == MissingDayPolicy::Reject) {
        if (report)
          report->add("rejected unit " + key.first + " year " + std::to_string(key.second) +
                      ": " + std::to_string(observed) + "/" + std::to_string(expected) +
                      " season days");
        continue;
      }
      // proration granularity follows the covariate period: per month for the
      // monthly schema (an empty month cannot be prorated), whole season otherwise
      if (schema.kind == SchemaKind::MonthlyFlexible) {
        bool empty_month = false;
        for (int m = m0; m <= m1; ++m) {
          int mi = m - m0;
          if (a.days[mi] == 0) {
            empty_month = true;
            if (report)
              report->add("rejected unit " + key.first + " year " + std::to_string(key.second) +
                          ": month " + std::to_string(m) + " has no days");
            break;
          }
          scale[mi] = static_cast<double>(days_in_month(key.second, m)) / a.days[mi];
        }
        if (empty_month) continue;
      } else {
        double s = static_cast<double>(expected) / observed;
        for (auto& v : scale) v = s;
      }
    }

    Eigen::VectorXd row(p);
    for (int j = 0; j < p; ++j) {
      const auto& c = cols[j];
      double v = 0;
      if (c.month > 0) {
        int mi = c.month - m0;
        v = c.role == ColumnInfo::Role::Precip ? a.prec[mi] * scale[mi]
                                               : a.bins[mi][c.bin_lo] * scale[mi];
      } else {
        for (int mi = 0; mi < nm; ++mi) {
          switch (c.role) {
            case ColumnInfo::Role::Lower: {
              double lo = 0;
              for (int b = 0; b < schema.threshold_c; ++b) lo += a.bins[mi][b];
              v += lo * scale[mi];
              break;
            }
            case ColumnInfo::Role::Higher: {
              double hi = 0;
              for (int b = schema.threshold_c; b < nb; ++b) hi += a.bins[mi][b];
              v += hi * scale[mi];
              break;
            }
            case ColumnInfo::Role::HeatBin:
              v += a.bins[mi][c.bin_lo] * scale[mi];
              break;
            case ColumnInfo::Role::Precip:
              v += a.prec[mi] * scale[mi];
              break;
          }
        }
      }
      row[j] = v;
    }
    units.push_back(key.first);
    periods.push_back(std::to_string(key.second));
    rows.push_back(std::move(row));
  }

  CovariateMatrix out;
  out.schema = schema;
  out.names = schema.covariate_names();
  out.unit_ids = std::move(units);
  out.period = std::move(periods);
  out.X.resize(static_cast<int>(rows.size()), p);
  for (std::size_t i = 0; i < rows.size(); ++i) out.X.row(static_cast<int>(i)) = rows[i];
  return out;
}

struct YearRange {
  int first = 0;
  int last = 0;
  bool contains(int y) const { return y >= first && y <= last; }
  std::string label() const { return std::to_string(first) + "-" + std::to_string(last); }
};

inline YearRange parse_year_range(const std::string& s) {
  auto pos = s.find(':');
  if (pos == std::string::npos) throw config_error("bad year range (expected FIRST:LAST): " + s);
  long long a = 0, b = 0;
  std::string sa = s.substr(0, pos), sb = s.substr(pos + 1);
  auto ok = [](const std::string& t, long long& v) {
    if (t.empty()) return false;
    for (char c : t)
      if (c < '0' || c > '9') return false;
    v = std::stoll(t);
    return true;
  };
  if (!ok(sa, a) || !ok(sb, b) || a > b) throw config_error("bad year range: " + s);
  YearRange r{static_cast<int>(a), static_cast<int>(b)};
  return r;
}

// Per-unit covariate means over two disjoint year ranges; emits a two-period
// matrix labeled by range. Units lacking years in either range are dropped.
inline CovariateMatrix long_run_average(const CovariateMatrix& m, const YearRange& r1,
                                        const YearRange& r2, DropReport* report = nullptr) {
  if (r1.last >= r2.first && r2.last >= r1.first)
    throw config_error("year ranges overlap: " + r1.label() + " and " + r2.label());
  struct Acc {
    Eigen::VectorXd sum1, sum2;
    int n1 = 0, n2 = 0;
  };
  std::map<std::string, Acc> acc;
  const int p = static_cast<int>(m.names.size());
  for (int i = 0; i < m.X.rows(); ++i) {
    long long year = 0;
    if (!parse_int(m.period[i], year)) continue;  // range-labeled rows cannot be re-averaged
    int which = r1.contains(static_cast<int>(year)) ? 1 : r2.contains(static_cast<int>(year)) ? 2 : 0;
    if (!which) continue;
    auto& a = acc[m.unit_ids[i]];
    if (a.n1 == 0 && a.n2 == 0 && a.sum1.size() == 0) {
      a.sum1 = Eigen::VectorXd::Zero(p);
      a.sum2 = Eigen::VectorXd::Zero(p);
    }
    if (which == 1) {
      a.sum1 += m.X.row(i).transpose();
      a.n1++;
    } else {
      a.sum2 += m.X.row(i).transpose();
      a.n2++;
    }
  }
  CovariateMatrix out;
  out.schema = m.schema;
  out.names = m.names;
  std::vector<Eigen::VectorXd> rows;
  for (auto& [unit, a] : acc) {
    if (a.n1 == 0 || a.n2 == 0) {
      if (report)
        report->add("dropped unit " + unit + ": no years in range " +
                    (a.n1 == 0 ? r1.label() : r2.label()));
      continue;
    }
    out.unit_ids.push_back(unit);
    out.period.push_back(r1.label());
    rows.push_back(a.sum1 / a.n1);
    out.unit_ids.push_back(unit);
    out.period.push_back(r2.label());
    rows.push_back(a.sum2 / a.n2);
  }
  out.X.resize(static_cast<int>(rows.size()), p);
  for (std::size_t i = 0; i < rows.size(); ++i) out.X.row(static_cast<int>(i)) = rows[i];
  return out;
}

}  // namespace paneldml
