#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <string>

namespace ibctrl {

// Deterministic random stream. Trial streams are derived from a master seed
// with a splitmix64 hash of (master, index), so adding trials never perturbs
// earlier ones. Gaussian draws use Box-Muller instead of
// std::normal_distribution to keep the stream independent of the standard
// library implementation.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : engine_(mix(seed, 0x9e3779b97f4a7c15ull)) {}

  static RngStream substream(std::uint64_t master, std::uint64_t index) {
    return RngStream(mix(master, index));
  }

  // The derived seed value a substream is built from (recorded in trial
  // logs so any record replays standalone).
  static std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
    return mix(master, index);
  }

  double uniform() {  // [0, 1)
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  Eigen::VectorXd normal_vector(int n) {
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v(i) = normal();
    return v;
  }

  // Draw from N(mean, cov); cov must be PSD (LLT with diagonal fallback).
  Eigen::VectorXd gaussian(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov);

  // Inverse-CDF draw from a probability vector; a one-hot row always returns
  // its support point.
  int categorical(const Eigen::VectorXd& probs) {
    const double u = uniform();
    double acc = 0.0;
    int last = 0;
    for (int i = 0; i < probs.size(); ++i) {
      if (probs(i) <= 0.0) continue;
      acc += probs(i);
      last = i;
      if (u < acc) return i;
    }
    return last;
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  static std::uint64_t mix(std::uint64_t seed, std::uint64_t index) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  std::mt19937_64 engine_;
};

enum class LogLevel { kError = 0, kWarn = 1, kInfo = 2, kDebug = 3 };

// Verbosity is controlled by the IBCTRL_LOG environment variable
// (error|warn|info|debug); default warn.
LogLevel log_level();
void log_message(LogLevel level, const std::string& message);

inline void log_warn(const std::string& m) { log_message(LogLevel::kWarn, m); }
inline void log_info(const std::string& m) { log_message(LogLevel::kInfo, m); }
inline void log_debug(const std::string& m) { log_message(LogLevel::kDebug, m); }

// 64-bit FNV-1a fingerprint, used for config hashes in run manifests.
std::uint64_t fnv1a64(const std::string& data);

}  // namespace ibctrl
