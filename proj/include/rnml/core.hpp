#ifndef RNML_CORE_HPP
#define RNML_CORE_HPP

#include <Eigen/Dense>

#include <charconv>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace rnml {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Raised when persisted data fails a structural check (bad link id, bad magic, ...).
struct data_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Raised when a dataset is too degenerate for the requested computation
// (a whole time bin empty, min == max before scaling, ...).
struct degenerate_data_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Raised when a required precomputed input is missing (histograms for rnml training).
struct missing_prerequisite_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t v) {
  return splitmix64(seed ^ (v + 0x9e3779b97f4a7c15ULL + (seed << 6) + (seed >> 2)));
}

// Deterministic RNG with hand-rolled distributions. std::* distributions are
// implementation-defined, so every draw here is spelled out to keep generated
// files byte-stable across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(splitmix64(seed)) {}

  std::uint64_t next_u64() {
    state_ = splitmix64(state_ + 0x2545f4914f6cdd1dULL);
    return state_;
  }

  // uniform in [0, 1)
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double a, double b) { return a + (b - a) * uniform01(); }

  double log_uniform(double a, double b) {
    return std::exp(uniform(std::log(a), std::log(b)));
  }

  // exponential with the given mean
  double exponential(double mean) { return -mean * std::log1p(-uniform01()); }

  double normal() {
    double u1 = uniform01();
    double u2 = uniform01();
    return std::sqrt(-2.0 * std::log1p(-u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  double lognormal(double mu_log, double sigma_log) {
    return std::exp(mu_log + sigma_log * normal());
  }

  // integer in [0, n)
  std::int64_t below(std::int64_t n) {
    auto r = static_cast<std::int64_t>(uniform01() * static_cast<double>(n));
    return r >= n ? n - 1 : r;
  }

  // length >= 1 with the given mean (shifted geometric)
  std::int64_t geometric_min1(double mean) {
    if (mean <= 1.0) return 1;
    double p = 1.0 / mean;
    double u = uniform01();
    auto extra = static_cast<std::int64_t>(std::floor(std::log1p(-u) / std::log1p(-p)));
    return 1 + extra;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(static_cast<std::int64_t>(i)));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t state_;
};

// Compensated accumulator; makes sums independent of trip order to ~1e-9.
struct KahanSum {
  double sum = 0.0;
  double carry = 0.0;
  void add(double x) {
    double y = x - carry;
    double t = sum + y;
    carry = (t - sum) - y;
    sum = t;
  }
  double value() const { return sum; }
};

// Worker cap: min(RNML_THREADS, hardware). 0/unset means hardware count.
std::size_t thread_cap();

// Index-parallel loop with deterministic output placement. fn(i) must only
// write state owned by index i.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

// Shortest round-trip decimal form of a double.
inline std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::string format_fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
  return std::string(buf);
}

}  // namespace rnml

#endif  // RNML_CORE_HPP
