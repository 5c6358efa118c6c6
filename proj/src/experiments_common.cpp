#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

#include "experiments_detail.hpp"
#include "ibctrl/experiments.hpp"

namespace ibctrl {

SummaryStats summarize(std::vector<double> values) {
  SummaryStats s;
  s.count = static_cast<int>(values.size());
  if (values.empty()) return s;
  std::sort(values.begin(), values.end());
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / s.count;
  double sq = 0.0;
  for (double v : values) sq += (v - s.mean) * (v - s.mean);
  s.variance = s.count > 1 ? sq / (s.count - 1) : 0.0;
  auto quantile = [&](double q) {
    const double pos = q * (s.count - 1);
    const int lo = static_cast<int>(std::floor(pos));
    const int hi = std::min(lo + 1, s.count - 1);
    return values[lo] + (pos - lo) * (values[hi] - values[lo]);
  };
  s.minimum = values.front();
  s.q25 = quantile(0.25);
  s.median = quantile(0.5);
  s.q75 = quantile(0.75);
  s.maximum = values.back();
  return s;
}

namespace detail {

// Parallel map over trial indices; each body(i) writes only slot i, so the
// result is independent of scheduling.
void parallel_trials(int n_trials, int threads, const std::function<void(int)>& body) {
  threads = std::max(1, threads);
  if (threads == 1) {
    for (int i = 0; i < n_trials; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  std::atomic<int> next{0};
  for (int w = 0; w < threads; ++w)
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < n_trials; i = next.fetch_add(1)) body(i);
    });
  for (auto& th : pool) th.join();
}

}  // namespace detail

}  // namespace ibctrl
