#pragma once

#include <string>

#include "aidroid/hin.hpp"
#include "aidroid/random.hpp"

namespace aidroid::testing {

// Random schema-valid HIN: every candidate pair joined by a relation gets an
// edge with probability p.
inline Hin random_hin(std::size_t n, double p, std::uint64_t seed) {
  Rng rng(seed);
  Hin g;
  for (std::size_t i = 0; i < n; ++i) {
    const auto t = kAllNodeTypes[uniform_index(rng, kNumNodeTypes)];
    g.add_node(t, "n" + std::to_string(i));
  }
  for (NodeId a = 0; a < n; ++a)
    for (NodeId b = a + 1; b < n; ++b)
      if (relation_between(g.type(a), g.type(b)) && bernoulli(rng, p)) g.add_edge(a, b);
  return g;
}

}  // namespace aidroid::testing
