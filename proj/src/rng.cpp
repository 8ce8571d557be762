#include "crowdserve/rng.hpp"

#include <algorithm>
#include <cmath>

namespace crowdserve {

ZipfSampler::ZipfSampler(std::size_t n, double exponent) {
  cdf_.reserve(n);
  double running = 0.0;
  for (std::size_t rank = 1; rank <= n; ++rank) {
    running += std::pow(static_cast<double>(rank), -exponent);
    cdf_.push_back(running);
  }
  for (double& v : cdf_) v /= running;
  if (!cdf_.empty()) cdf_.back() = 1.0;
}

std::size_t ZipfSampler::sample(SplitMix64& rng) const {
  double u = rng.next_double();
  auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
  if (it == cdf_.end()) return cdf_.size() - 1;
  return static_cast<std::size_t>(it - cdf_.begin());
}

}  // namespace crowdserve
