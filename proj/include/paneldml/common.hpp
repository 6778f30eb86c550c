#pragma once

#include <atomic>
#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace paneldml {

struct error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
// bad flags, ranges, fold counts, overlapping year windows
struct config_error : error {
  using error::error;
};
// malformed or inconsistent input data; message names the offending record
struct data_error : error {
  using error::error;
};
// schema violations: unknown covariates, bad bin index, dimension mismatch
struct schema_error : error {
  using error::error;
};
// singular designs and solver non-convergence
struct numeric_error : error {
  using error::error;
};

// input validation collects every problem before failing
struct validation_error : error {
  std::vector<std::string> problems;
  explicit validation_error(std::vector<std::string> p)
      : error(join(p)), problems(std::move(p)) {}
  static std::string join(const std::vector<std::string>& p) {
    std::string s = "validation failed (" + std::to_string(p.size()) + " problem(s)):";
    for (const auto& x : p) s += "\n  " + x;
    return s;
  }
};

inline std::uint64_t fnv1a64(const void* data, std::size_t n,
                             std::uint64_t h = 1469598103934665603ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

inline std::uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// 17 significant digits round-trip doubles exactly
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Runs fn(i) for i in [0, n). Output must be written to per-index slots so the
// result is independent of the worker count.
template <typename Fn>
void parallel_for(std::size_t n, unsigned jobs, Fn&& fn) {
  if (jobs <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      fn(i);
    }
  };
  std::vector<std::thread> pool;
  unsigned k = std::min<std::size_t>(jobs, n);
  pool.reserve(k);
  for (unsigned t = 0; t < k; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
}

inline unsigned default_jobs() {
  unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : n;
}

// dropped units, rejected rows and similar non-fatal events, surfaced in reports
struct DropReport {
  std::vector<std::string> notes;
  void add(std::string n) { notes.push_back(std::move(n)); }
  bool empty() const { return notes.empty(); }
};

}  // namespace paneldml
