#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "paneldml/csv.hpp"
#include "paneldml/dml.hpp"
#include "paneldml/studies.hpp"

namespace paneldml {

// Deterministic JSON output: insertion-ordered objects, floats via
// format_double so every emitted number round-trips bit-exactly. Non-finite
// floats become null (JSON has no literal for them). Parsing is delegated to
// the vendored nlohmann header; this type is write-only.
class JsonValue {
 public:
  JsonValue() : v_(nullptr) {}
  JsonValue(std::nullptr_t) : v_(nullptr) {}
  JsonValue(bool b) : v_(b) {}
  JsonValue(int i) : v_(static_cast<std::int64_t>(i)) {}
  JsonValue(std::int64_t i) : v_(i) {}
  JsonValue(std::uint64_t i) : v_(static_cast<std::int64_t>(i)) {}
  JsonValue(double d) : v_(d) {}
  JsonValue(const char* s) : v_(std::string(s)) {}
  JsonValue(std::string s) : v_(std::move(s)) {}

  static JsonValue array() {
    JsonValue j;
    j.v_ = Arr{};
    return j;
  }
  static JsonValue object() {
    JsonValue j;
    j.v_ = Obj{};
    return j;
  }

  JsonValue& operator[](const std::string& key) {
    if (!std::holds_alternative<Obj>(v_)) v_ = Obj{};
    auto& o = std::get<Obj>(v_);
    for (auto& [k, val] : o)
      if (k == key) return val;
    o.emplace_back(key, JsonValue());
    return o.back().second;
  }

  void push_back(JsonValue j) {
    if (!std::holds_alternative<Arr>(v_)) v_ = Arr{};
    std::get<Arr>(v_).push_back(std::move(j));
  }

  std::string dump(int indent = 2) const {
    std::string out;
    write(out, indent, 0);
    out.push_back('\n');
    return out;
  }

 private:
  using Arr = std::vector<JsonValue>;
  using Obj = std::vector<std::pair<std::string, JsonValue>>;
  std::variant<std::nullptr_t, bool, std::int64_t, double, std::string, Arr, Obj> v_;

  static void escape(std::string& out, const std::string& s) {
    out.push_back('"');
    for (char c : s) {
      switch (c) {
        case '"': out += "\\\""; break;
        case '\\': out += "\\\\"; break;
        case '\n': out += "\\n"; break;
        case '\r': out += "\\r"; break;
        case '\t': out += "\\t"; break;
        default:
          if (static_cast<unsigned char>(c) < 0x20) {
            char buf[8];
            std::snprintf(buf, sizeof buf, "\\u%04x", c);
            out += buf;
          } else {
            out.push_back(c);
          }
      }
    }
    out.push_back('"');
  }

  void write(std::string& out, int indent, int depth) const {
    const std::string pad(static_cast<std::size_t>(indent) * (depth + 1), ' ');
    const std::string close_pad(static_cast<std::size_t>(indent) * depth, ' ');
    if (std::holds_alternative<std::nullptr_t>(v_)) {
      out += "null";
    } else if (std::holds_alternative<bool>(v_)) {
      out += std::get<bool>(v_) ? "true" : "false";
    } else if (std::holds_alternative<std::int64_t>(v_)) {
      out += std::to_string(std::get<std::int64_t>(v_));
    } else if (std::holds_alternative<double>(v_)) {
      double d = std::get<double>(v_);
      out += std::isfinite(d) ? format_double(d) : "null";
    } else if (std::holds_alternative<std::string>(v_)) {
      escape(out, std::get<std::string>(v_));
    } else if (std::holds_alternative<Arr>(v_)) {
      const auto& a = std::get<Arr>(v_);
      if (a.empty()) {
        out += "[]";
        return;
      }
      out.push_back('[');
      for (std::size_t i = 0; i < a.size(); ++i) {
        out += i ? ",\n" : "\n";
        out += pad;
        a[i].write(out, indent, depth + 1);
      }
      out += "\n" + close_pad + "]";
    } else {
      const auto& o = std::get<Obj>(v_);
      if (o.empty()) {
        out += "{}";
        return;
      }
      out.push_back('{');
      for (std::size_t i = 0; i < o.size(); ++i) {
        out += i ? ",\n" : "\n";
        out += pad;
        escape(out, o[i].first);
        out += ": ";
        o[i].second.write(out, indent, depth + 1);
      }
      out += "\n" + close_pad + "}";
    }
  }
};

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error("cannot open file for writing: " + path);
  out << content;
  if (!out) throw data_error("write failed: " + path);
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("cannot open file: " + path);
  std::string s((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return s;
}

inline std::string file_hash_hex(const std::string& path) {
  return hex64(fnv1a64(read_text_file(path)));
}

// Flat double blobs holding model weights; the JSON side records the count
// and a content hash so a stale or truncated blob is detected on load.
struct BlobWriter {
  std::vector<double> data;

  void add(double v) { data.push_back(v); }
  void add(const Eigen::VectorXd& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) data.push_back(v[i]);
  }
  void add(const Eigen::MatrixXd& m) {  // row-major
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  }

  std::uint64_t write(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw data_error("cannot open file for writing: " + path);
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size() * sizeof(double)));
    if (!out) throw data_error("write failed: " + path);
    return fnv1a64(data.data(), data.size() * sizeof(double));
  }
};

struct BlobReader {
  std::vector<double> data;
  std::size_t pos = 0;
  std::uint64_t hash = 0;

  explicit BlobReader(const std::string& path) {
    std::string bytes = read_text_file(path);
    if (bytes.size() % sizeof(double) != 0)
      throw data_error("blob size is not a multiple of 8 bytes: " + path);
    data.resize(bytes.size() / sizeof(double));
    std::memcpy(data.data(), bytes.data(), bytes.size());
    hash = fnv1a64(bytes);
  }

  double scalar() {
    if (pos >= data.size()) throw data_error("blob exhausted");
    return data[pos++];
  }
  Eigen::VectorXd vec(Eigen::Index n) {
    if (pos + static_cast<std::size_t>(n) > data.size()) throw data_error("blob exhausted");
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = data[pos++];
    return v;
  }
  Eigen::MatrixXd mat(Eigen::Index r, Eigen::Index c) {
    if (pos + static_cast<std::size_t>(r * c) > data.size()) throw data_error("blob exhausted");
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
      for (Eigen::Index j = 0; j < c; ++j) m(i, j) = data[pos++];
    return m;
  }
};

// ---- dictionary manifest ----------------------------------------------------

inline JsonValue schema_json(const VariableSetSchema& s) {
  JsonValue j = JsonValue::object();
  j["kind"] = schema_name(s.kind);
  j["threshold_c"] = s.threshold_c;
  j["season_first_month"] = s.season_first_month;
  j["season_last_month"] = s.season_last_month;
  j["n_bins"] = s.n_bins;
  return j;
}

inline VariableSetSchema schema_from_json(const nlohmann::json& j) {
  VariableSetSchema s;
  s.kind = parse_schema(j.at("kind").get<std::string>());
  s.threshold_c = j.at("threshold_c").get<int>();
  s.season_first_month = j.at("season_first_month").get<int>();
  s.season_last_month = j.at("season_last_month").get<int>();
  s.n_bins = j.at("n_bins").get<int>();
  return s;
}

// Ordered term descriptors plus the training-fold scale; enough to re-expand
// a raw covariate matrix bit-exactly in a later run.
inline JsonValue dictionary_manifest(const BasisDictionary& d) {
  JsonValue j = JsonValue::object();
  j["schema"] = schema_json(d.schema);
  j["degree"] = d.degree;
  j["identity"] = d.identity;
  JsonValue terms = JsonValue::array();
  for (const auto& t : d.terms) {
    JsonValue e = JsonValue::array();
    e.push_back(t.cov_a);
    e.push_back(t.pow_a);
    e.push_back(t.cov_b);
    e.push_back(t.pow_b);
    terms.push_back(std::move(e));
  }
  j["terms"] = std::move(terms);
  JsonValue mean = JsonValue::array(), sd = JsonValue::array(), dropped = JsonValue::array();
  for (Eigen::Index i = 0; i < d.mean.size(); ++i) mean.push_back(d.mean[i]);
  for (Eigen::Index i = 0; i < d.sd.size(); ++i) sd.push_back(d.sd[i]);
  for (auto f : d.dropped) dropped.push_back(static_cast<std::int64_t>(f));
  j["mean"] = std::move(mean);
  j["sd"] = std::move(sd);
  j["dropped"] = std::move(dropped);
  return j;
}

inline BasisDictionary dictionary_from_manifest(const nlohmann::json& j) {
  BasisDictionary d;
  d.schema = schema_from_json(j.at("schema"));
  d.degree = j.at("degree").get<int>();
  d.identity = j.at("identity").get<bool>();
  for (const auto& e : j.at("terms")) {
    TermSpec t;
    t.cov_a = e.at(0).get<int>();
    t.pow_a = e.at(1).get<int>();
    t.cov_b = e.at(2).get<int>();
    t.pow_b = e.at(3).get<int>();
    d.terms.push_back(t);
  }
  const auto& mean = j.at("mean");
  const auto& sd = j.at("sd");
  d.mean.resize(static_cast<Eigen::Index>(mean.size()));
  d.sd.resize(static_cast<Eigen::Index>(sd.size()));
  for (std::size_t i = 0; i < mean.size(); ++i) d.mean[static_cast<Eigen::Index>(i)] = mean[i].get<double>();
  for (std::size_t i = 0; i < sd.size(); ++i) d.sd[static_cast<Eigen::Index>(i)] = sd[i].get<double>();
  for (const auto& f : j.at("dropped")) d.dropped.push_back(static_cast<std::uint8_t>(f.get<int>()));
  return d;
}

inline std::string dictionary_hash_hex(const BasisDictionary& d) {
  return hex64(fnv1a64(dictionary_manifest(d).dump()));
}

// ---- model serialization ----------------------------------------------------

namespace detail {

inline JsonValue blob_meta(const std::string& blob_path, std::uint64_t hash, std::size_t count) {
  JsonValue b = JsonValue::object();
  b["file"] = std::filesystem::path(blob_path).filename().string();
  b["fnv1a64"] = hex64(hash);
  b["values"] = static_cast<std::int64_t>(count);
  return b;
}

inline BlobReader open_blob(const nlohmann::json& meta, const std::string& json_path) {
  auto file = std::filesystem::path(json_path).parent_path() /
              meta.at("file").get<std::string>();
  BlobReader r(file.string());
  if (hex64(r.hash) != meta.at("fnv1a64").get<std::string>())
    throw data_error("blob content hash mismatch: " + file.string());
  if (r.data.size() != meta.at("values").get<std::size_t>())
    throw data_error("blob value count mismatch: " + file.string());
  return r;
}

}  // namespace detail

inline void save_linear_model(const LinearModel& m, const std::string& json_path,
                              const std::string& blob_path) {
  BlobWriter blob;
  blob.add(m.beta);
  blob.add(m.year_coef);
  std::uint64_t h = blob.write(blob_path);

  JsonValue j = JsonValue::object();
  j["type"] = "linear";
  j["method"] = method_name(m.method);
  j["lambda"] = m.lambda;
  j["in_sample_mse"] = m.in_sample_mse;
  j["iterations"] = m.iterations;
  j["converged"] = m.converged;
  JsonValue dc = JsonValue::array();
  for (const auto& c : m.dropped_columns) dc.push_back(c);
  j["dropped_columns"] = std::move(dc);
  JsonValue yl = JsonValue::array();
  for (const auto& l : m.year_levels) yl.push_back(l);
  j["year_levels"] = std::move(yl);
  j["beta_size"] = static_cast<std::int64_t>(m.beta.size());
  j["dictionary_hash"] = dictionary_hash_hex(m.dict);
  j["dictionary"] = dictionary_manifest(m.dict);
  j["blob"] = detail::blob_meta(blob_path, h, blob.data.size());
  write_text_file(json_path, j.dump());
}

inline LinearModel load_linear_model(const std::string& json_path) {
  nlohmann::json j = nlohmann::json::parse(read_text_file(json_path));
  if (j.at("type").get<std::string>() != "linear")
    throw data_error("not a linear model file: " + json_path);
  LinearModel m;
  m.method = parse_method(j.at("method").get<std::string>());
  m.dict = dictionary_from_manifest(j.at("dictionary"));
  m.lambda = j.at("lambda").is_null() ? std::numeric_limits<double>::quiet_NaN()
                                      : j.at("lambda").get<double>();
  m.in_sample_mse = j.at("in_sample_mse").get<double>();
  m.iterations = j.at("iterations").get<int>();
  m.converged = j.at("converged").get<bool>();
  for (const auto& c : j.at("dropped_columns")) m.dropped_columns.push_back(c.get<std::string>());
  for (const auto& l : j.at("year_levels")) m.year_levels.push_back(l.get<std::string>());
  BlobReader blob = detail::open_blob(j.at("blob"), json_path);
  auto nb = j.at("beta_size").get<Eigen::Index>();
  m.beta = blob.vec(nb);
  m.year_coef = blob.vec(static_cast<Eigen::Index>(blob.data.size()) - nb);
  return m;
}

inline void save_nnet_model(const NNetModel& m, const std::string& json_path,
                            const std::string& blob_path) {
  BlobWriter blob;
  blob.add(m.in_mean);
  blob.add(m.in_sd);
  blob.add(m.W1);
  blob.add(m.bn_gamma);
  blob.add(m.bn_beta);
  blob.add(m.w2);
  blob.add(m.b2);
  blob.add(m.year_coef);
  blob.add(m.bn_mean);
  blob.add(m.bn_var);
  std::uint64_t h = blob.write(blob_path);

  JsonValue j = JsonValue::object();
  j["type"] = "nnet";
  JsonValue cfg = JsonValue::object();
  cfg["width"] = m.cfg.width;
  cfg["epochs"] = m.cfg.epochs;
  cfg["lr"] = m.cfg.lr;
  cfg["beta1"] = m.cfg.beta1;
  cfg["beta2"] = m.cfg.beta2;
  cfg["adam_eps"] = m.cfg.adam_eps;
  cfg["bn_eps"] = m.cfg.bn_eps;
  j["config"] = std::move(cfg);
  j["inputs"] = static_cast<std::int64_t>(m.W1.cols());
  JsonValue yl = JsonValue::array();
  for (const auto& l : m.year_levels) yl.push_back(l);
  j["year_levels"] = std::move(yl);
  j["train_mse"] = m.train_mse;
  j["epochs_run"] = m.epochs_run;
  j["year_coef_size"] = static_cast<std::int64_t>(m.year_coef.size());
  j["blob"] = detail::blob_meta(blob_path, h, blob.data.size());
  write_text_file(json_path, j.dump());
}

inline NNetModel load_nnet_model(const std::string& json_path) {
  nlohmann::json j = nlohmann::json::parse(read_text_file(json_path));
  if (j.at("type").get<std::string>() != "nnet")
    throw data_error("not a nnet model file: " + json_path);
  NNetModel m;
  const auto& cfg = j.at("config");
  m.cfg.width = cfg.at("width").get<int>();
  m.cfg.epochs = cfg.at("epochs").get<int>();
  m.cfg.lr = cfg.at("lr").get<double>();
  m.cfg.beta1 = cfg.at("beta1").get<double>();
  m.cfg.beta2 = cfg.at("beta2").get<double>();
  m.cfg.adam_eps = cfg.at("adam_eps").get<double>();
  m.cfg.bn_eps = cfg.at("bn_eps").get<double>();
  for (const auto& l : j.at("year_levels")) m.year_levels.push_back(l.get<std::string>());
  m.train_mse = j.at("train_mse").get<double>();
  m.epochs_run = j.at("epochs_run").get<int>();
  auto inputs = j.at("inputs").get<Eigen::Index>();
  auto width = static_cast<Eigen::Index>(m.cfg.width);
  BlobReader blob = detail::open_blob(j.at("blob"), json_path);
  m.in_mean = blob.vec(inputs);
  m.in_sd = blob.vec(inputs);
  m.W1 = blob.mat(width, inputs);
  m.bn_gamma = blob.vec(width);
  m.bn_beta = blob.vec(width);
  m.w2 = blob.vec(width);
  m.b2 = blob.scalar();
  m.year_coef = blob.vec(j.at("year_coef_size").get<Eigen::Index>());
  m.bn_mean = blob.vec(width);
  m.bn_var = blob.vec(width);
  return m;
}

inline void save_riesz_fit(const RieszFit& f, const std::string& json_path,
                           const std::string& blob_path,
                           const std::string& dictionary_hash = "") {
  BlobWriter blob;
  blob.add(f.rho);
  blob.add(f.weights);
  std::uint64_t h = blob.write(blob_path);

  JsonValue j = JsonValue::object();
  j["type"] = "riesz";
  j["kappa"] = f.kappa;
  j["weight_iterations"] = f.weight_iterations;
  j["iterations"] = f.iterations;
  j["jittered"] = f.jittered;
  JsonValue lt = JsonValue::array();
  for (double v : f.loss_trace) lt.push_back(v);
  j["loss_trace"] = std::move(lt);
  if (!dictionary_hash.empty()) j["dictionary_hash"] = dictionary_hash;
  j["rho_size"] = static_cast<std::int64_t>(f.rho.size());
  j["blob"] = detail::blob_meta(blob_path, h, blob.data.size());
  write_text_file(json_path, j.dump());
}

inline RieszFit load_riesz_fit(const std::string& json_path) {
  nlohmann::json j = nlohmann::json::parse(read_text_file(json_path));
  if (j.at("type").get<std::string>() != "riesz")
    throw data_error("not a riesz fit file: " + json_path);
  RieszFit f;
  f.kappa = j.at("kappa").get<double>();
  f.weight_iterations = j.at("weight_iterations").get<int>();
  f.iterations = j.at("iterations").get<int>();
  f.jittered = j.at("jittered").get<bool>();
  for (const auto& v : j.at("loss_trace")) f.loss_trace.push_back(v.get<double>());
  BlobReader blob = detail::open_blob(j.at("blob"), json_path);
  auto nr = j.at("rho_size").get<Eigen::Index>();
  f.rho = blob.vec(nr);
  f.weights = blob.vec(static_cast<Eigen::Index>(blob.data.size()) - nr);
  return f;
}

// ---- reports ------------------------------------------------------------

inline JsonValue estimate_report_json(const DebiasedEstimate& est, const VariableSetSchema& schema) {
  JsonValue j = JsonValue::object();
  j["method"] = method_name(est.method);
  j["schema"] = schema_name(schema.kind);
  j["theta"] = est.theta;
  j["se"] = est.se;
  j["variance"] = est.variance;
  j["plug_in"] = est.plug_in;
  j["test_mse"] = est.test_mse;
  j["n_rows"] = est.n_rows;
  j["n_units"] = est.n_units;
  j["folds"] = est.folds;
  j["fold_hash"] = hex64(est.fold_hash);

  JsonValue sel = JsonValue::object();
  if (est.method == Method::Lasso || est.method == Method::LassoDml)
    sel["lambda"] = est.selected_lambda;
  if (est.method == Method::NNet || est.method == Method::NNetDml)
    sel["width"] = est.selected_width;
  if (is_debiased(est.method)) sel["kappa"] = est.selected_kappa;
  j["selected"] = std::move(sel);

  JsonValue pf = JsonValue::array();
  for (int f = 0; f < est.folds && is_cross_fit(est.method); ++f) {
    JsonValue e = JsonValue::object();
    e["fold"] = f;
    if (f < static_cast<int>(est.fold_linear.size())) {
      e["lambda"] = est.fold_linear[f].lambda;
      e["converged"] = est.fold_linear[f].converged;
    }
    if (f < static_cast<int>(est.fold_nets.size())) {
      e["width"] = est.fold_nets[f].cfg.width;
      e["epochs_run"] = est.fold_nets[f].epochs_run;
    }
    if (f < static_cast<int>(est.fold_riesz.size())) {
      e["kappa"] = est.fold_riesz[f].kappa;
      e["riesz_iterations"] = est.fold_riesz[f].iterations;
    }
    pf.push_back(std::move(e));
  }
  j["per_fold"] = std::move(pf);

  JsonValue notes = JsonValue::array();
  for (const auto& n : est.report.notes) notes.push_back(n);
  j["notes"] = std::move(notes);
  return j;
}

// One line per problem so callers can act on the full list mechanically.
inline std::string error_report_json(const std::exception& e) {
  JsonValue j = JsonValue::object();
  const char* kind = "internal";
  if (dynamic_cast<const validation_error*>(&e)) {
    kind = "validation";
  } else if (dynamic_cast<const config_error*>(&e)) {
    kind = "config";
  } else if (dynamic_cast<const schema_error*>(&e)) {
    kind = "schema";
  } else if (dynamic_cast<const data_error*>(&e)) {
    kind = "data";
  } else if (dynamic_cast<const numeric_error*>(&e)) {
    kind = "numeric";
  }
  j["error"] = kind;
  j["message"] = std::string(e.what());
  if (const auto* v = dynamic_cast<const validation_error*>(&e)) {
    JsonValue p = JsonValue::array();
    for (const auto& s : v->problems) p.push_back(s);
    j["problems"] = std::move(p);
  }
  return j.dump();
}

inline JsonValue manifest_json(const std::vector<std::string>& input_paths,
                               const std::vector<std::string>& output_paths) {
  auto entry = [](const std::string& p) {
    JsonValue e = JsonValue::object();
    e["path"] = std::filesystem::path(p).filename().string();
    e["fnv1a64"] = file_hash_hex(p);
    e["bytes"] = static_cast<std::int64_t>(std::filesystem::file_size(p));
    return e;
  };
  JsonValue j = JsonValue::object();
  JsonValue in = JsonValue::array(), out = JsonValue::array();
  for (const auto& p : input_paths) in.push_back(entry(p));
  for (const auto& p : output_paths) out.push_back(entry(p));
  j["inputs"] = std::move(in);
  j["outputs"] = std::move(out);
  return j;
}

// ---- CSV input ------------------------------------------------------------

inline std::vector<DailyWeatherRecord> load_daily_weather(const std::string& path) {
  CsvTable t = read_csv(path);
  std::vector<std::string> problems;
  int c_unit = t.column("unit_id"), c_date = t.column("date"), c_tmin = t.column("tmin_c"),
      c_tmax = t.column("tmax_c"), c_prec = t.column("prec_mm");
  if (c_unit < 0) problems.push_back(path + ": missing column: unit_id");
  if (c_date < 0) problems.push_back(path + ": missing column: date");
  if (c_tmin < 0) problems.push_back(path + ": missing column: tmin_c");
  if (c_tmax < 0) problems.push_back(path + ": missing column: tmax_c");
  if (c_prec < 0) problems.push_back(path + ": missing column: prec_mm");
  if (!problems.empty()) throw validation_error(std::move(problems));

  std::vector<DailyWeatherRecord> out;
  out.reserve(t.rows.size());
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& r = t.rows[i];
    const std::string where = path + " row " + std::to_string(i + 2);
    DailyWeatherRecord rec;
    rec.unit_id = r[c_unit];
    if (rec.unit_id.empty()) problems.push_back(where + ": empty unit_id");
    try {
      parse_iso_date(r[c_date], rec.year, rec.month, rec.day);
    } catch (const data_error& e) {
      problems.push_back(where + ": " + e.what());
    }
    if (!parse_double(r[c_tmin], rec.tmin_c)) problems.push_back(where + ": bad tmin_c: " + r[c_tmin]);
    if (!parse_double(r[c_tmax], rec.tmax_c)) problems.push_back(where + ": bad tmax_c: " + r[c_tmax]);
    if (!parse_double(r[c_prec], rec.prec_mm)) problems.push_back(where + ": bad prec_mm: " + r[c_prec]);
    out.push_back(std::move(rec));
  }
  if (!problems.empty()) throw validation_error(std::move(problems));
  return out;
}

inline std::vector<YieldRecord> load_yields(const std::string& path) {
  CsvTable t = read_csv(path);
  std::vector<std::string> problems;
  int c_unit = t.column("unit_id"), c_year = t.column("year"), c_yield = t.column("yield");
  int c_area = t.column("area");  // optional
  if (c_unit < 0) problems.push_back(path + ": missing column: unit_id");
  if (c_year < 0) problems.push_back(path + ": missing column: year");
  if (c_yield < 0) problems.push_back(path + ": missing column: yield");
  if (!problems.empty()) throw validation_error(std::move(problems));

  std::vector<YieldRecord> out;
  out.reserve(t.rows.size());
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& r = t.rows[i];
    const std::string where = path + " row " + std::to_string(i + 2);
    YieldRecord rec;
    rec.unit_id = r[c_unit];
    if (rec.unit_id.empty()) problems.push_back(where + ": empty unit_id");
    long long y = 0;
    if (!parse_int(r[c_year], y)) problems.push_back(where + ": bad year: " + r[c_year]);
    rec.year = static_cast<int>(y);
    if (!parse_double(r[c_yield], rec.yield)) {
      problems.push_back(where + ": bad yield: " + r[c_yield]);
    } else if (!(rec.yield > 0)) {
      problems.push_back(where + ": yield must be positive, got " + r[c_yield]);
    }
    if (c_area >= 0 && !parse_double(r[c_area], rec.area))
      problems.push_back(where + ": bad area: " + r[c_area]);
    out.push_back(std::move(rec));
  }
  if (!problems.empty()) throw validation_error(std::move(problems));
  return out;
}

// Reads a panel in the audit-export layout: unit_id, year (any period label),
// y, then one column per schema covariate. A fold column is ignored; an
// optional weight column sets the per-unit weight and must not vary within a
// unit.
inline PanelDataset load_panel_csv(const std::string& path, const VariableSetSchema& schema) {
  CsvTable t = read_csv(path);
  std::vector<std::string> problems;
  int c_unit = t.column("unit_id"), c_year = t.column("year"), c_y = t.column("y");
  int c_weight = t.column("weight");  // optional
  if (c_unit < 0) problems.push_back(path + ": missing column: unit_id");
  if (c_year < 0) problems.push_back(path + ": missing column: year");
  if (c_y < 0) problems.push_back(path + ": missing column: y");
  const std::vector<std::string> names = schema.covariate_names();
  std::vector<int> c_cov(names.size());
  for (std::size_t j = 0; j < names.size(); ++j) {
    c_cov[j] = t.column(names[j]);
    if (c_cov[j] < 0) problems.push_back(path + ": missing column: " + names[j]);
  }
  if (!problems.empty()) throw validation_error(std::move(problems));

  std::map<std::pair<std::string, std::string>, std::pair<double, Eigen::VectorXd>> cells;
  std::map<std::string, double> weights;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& r = t.rows[i];
    const std::string where = path + " row " + std::to_string(i + 2);
    std::string unit = r[c_unit];
    if (unit.empty()) {
      problems.push_back(where + ": empty unit_id");
      continue;
    }
    double y = 0;
    if (!parse_double(r[c_y], y)) problems.push_back(where + ": bad y: " + r[c_y]);
    Eigen::VectorXd x(static_cast<Eigen::Index>(names.size()));
    for (std::size_t j = 0; j < names.size(); ++j)
      if (!parse_double(r[c_cov[j]], x[static_cast<Eigen::Index>(j)]))
        problems.push_back(where + ": bad " + names[j] + ": " + r[c_cov[j]]);
    if (!cells.emplace(std::make_pair(unit, r[c_year]), std::make_pair(y, std::move(x))).second)
      problems.push_back(where + ": duplicate row for unit " + unit + " period " + r[c_year]);
    if (c_weight >= 0) {
      double w = 0;
      if (!parse_double(r[c_weight], w)) {
        problems.push_back(where + ": bad weight: " + r[c_weight]);
      } else if (auto it = weights.find(unit); it != weights.end() && it->second != w) {
        problems.push_back(where + ": weight varies within unit " + unit);
      } else {
        weights[unit] = w;
      }
    }
  }
  if (!problems.empty()) throw validation_error(std::move(problems));
  if (cells.empty()) throw data_error(path + ": no panel rows");
  return detail::assemble_panel(schema, names, cells, weights);
}

// ---- CSV output -------------------------------------------------------------

inline void write_covariates_csv(const std::string& path, const CovariateMatrix& cov) {
  CsvWriter w(path);
  std::vector<std::string> head{"unit_id", "year"};
  for (const auto& n : cov.names) head.push_back(n);
  w.row(head);
  for (Eigen::Index i = 0; i < cov.X.rows(); ++i) {
    std::vector<std::string> r{cov.unit_ids[i], cov.period[i]};
    for (Eigen::Index j = 0; j < cov.X.cols(); ++j) r.push_back(CsvWriter::num(cov.X(i, j)));
    w.row(r);
  }
}

inline void write_panel_csv(const std::string& path, const PanelDataset& p,
                            const std::vector<int>& fold_of_unit) {
  CsvWriter w(path);
  std::vector<std::string> head{"unit_id", "year", "fold", "y"};
  for (const auto& n : p.covariate_names) head.push_back(n);
  w.row(head);
  for (int i = 0; i < p.n_rows(); ++i) {
    int u = p.row_unit[i];
    std::vector<std::string> r{p.unit_ids[u], p.row_period[i],
                               fold_of_unit.empty() ? "-1" : std::to_string(fold_of_unit[u]),
                               CsvWriter::num(p.y[i])};
    for (Eigen::Index j = 0; j < p.X.cols(); ++j) r.push_back(CsvWriter::num(p.X(i, j)));
    w.row(r);
  }
}

inline void write_sim_summary_csv(const std::string& path, const SimulationResult& res) {
  CsvWriter w(path);
  w.row({"method", "schema", "mean_theta", "sd_theta", "mse", "failures"});
  for (const auto& c : res.cells)
    w.row({method_name(c.method), schema_name(c.schema), CsvWriter::num(c.mean_theta),
           CsvWriter::num(c.sd_theta), CsvWriter::num(c.mean_mse), std::to_string(c.failures)});
}

inline void write_adaptation_csv(const std::string& path, const AdaptationResult& res) {
  CsvWriter w(path);
  w.row({"trial", "theta_sr", "theta_lr", "ratio"});
  for (std::size_t i = 0; i < res.trials.size(); ++i) {
    const auto& t = res.trials[i];
    w.row({std::to_string(i), CsvWriter::num(t.theta_sr), CsvWriter::num(t.theta_lr),
           CsvWriter::num(t.ratio)});
  }
}

inline void write_bins_csv(const std::string& path, const BinStudy& study) {
  CsvWriter w(path);
  w.row({"bin_lo", "effect", "sd", "fit"});
  for (const auto& b : study.bins)
    w.row({std::to_string(b.bin_lo), CsvWriter::num(b.effect), CsvWriter::num(b.sd),
           CsvWriter::num(b.fit)});
}

inline JsonValue adaptation_report_json(const AdaptationResult& res) {
  JsonValue j = JsonValue::object();
  j["trials"] = static_cast<std::int64_t>(res.trials.size());
  j["ok"] = res.n_ok;
  j["failed"] = res.n_failed;
  j["guarded_near_zero_sr"] = res.n_guarded;
  j["mean_ratio"] = res.mean_ratio;
  j["sd_ratio"] = res.sd_ratio;
  j["ci_lo"] = res.ci_lo;
  j["ci_hi"] = res.ci_hi;
  j["p_value"] = res.p_value;
  j["p_bonferroni"] = res.p_bonferroni;
  return j;
}

}  // namespace paneldml
