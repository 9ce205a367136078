#include "slowgen/rng.hpp"

#include <algorithm>

namespace slowgen {

BinomialTable::BinomialTable(int n, double p) : n_(n), cdf_(n + 1) {
  if (p <= 0.0 || p >= 1.0) {
    // degenerate cases: all mass at 0 or at n
    std::fill(cdf_.begin(), cdf_.end(), p <= 0.0 ? 1.0 : 0.0);
    cdf_[n] = 1.0;
    return;
  }
  // pmf by recurrence in log space to avoid under/overflow at large n.
  std::vector<double> logpmf(n + 1);
  const double lp = std::log(p);
  const double lq = std::log1p(-p);
  logpmf[0] = n * lq;
  for (int k = 1; k <= n; ++k) {
    logpmf[k] = logpmf[k - 1] + std::log(double(n - k + 1) / k) + lp - lq;
  }
  const double m = *std::max_element(logpmf.begin(), logpmf.end());
  double acc = 0.0;
  for (int k = 0; k <= n; ++k) {
    acc += std::exp(logpmf[k] - m);
    cdf_[k] = acc;
  }
  for (double& c : cdf_) c /= acc;
  cdf_[n] = 1.0;
}

int BinomialTable::sample(Rng& rng) const {
  const double u = rng.uniform();
  return int(std::upper_bound(cdf_.begin(), cdf_.end(), u) - cdf_.begin());
}

}  // namespace slowgen
