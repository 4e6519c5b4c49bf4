#include "aidroid/random.hpp"

#include <cmath>

namespace aidroid {

bool bernoulli(Rng& rng, double p) { return uniform01(rng) < p; }

std::uint32_t poisson(Rng& rng, double mean) {
  if (mean <= 0.0) return 0;
  const double limit = std::exp(-mean);
  std::uint32_t k = 0;
  double prod = uniform01(rng);
  while (prod > limit) {
    ++k;
    prod *= uniform01(rng);
  }
  return k;
}

}  // namespace aidroid
