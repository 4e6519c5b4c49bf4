#pragma once

#include <algorithm>
#include <limits>
#include <set>
#include <vector>

#include "aidroid/hin.hpp"

namespace aidroid::testing {

// Set algebra straight from the definition, on std::set with no shortcuts:
// S0 = {v}, S1 = N(v), Sm = N(S(m-1)) \ (S(m-1) u S(m-2)).
inline std::vector<std::set<NodeId>> korder_by_sets(const Hin& g, NodeId v, unsigned k) {
  auto nbrs = [&](const std::set<NodeId>& s) {
    std::set<NodeId> out;
    for (NodeId z : s)
      for (NodeId u : g.neighbors(z)) out.insert(u);
    return out;
  };
  std::vector<std::set<NodeId>> s{{v}};
  for (unsigned m = 1; m <= k; ++m) {
    std::set<NodeId> next = nbrs(s[m - 1]);
    for (NodeId u : s[m - 1]) next.erase(u);
    if (m >= 2)
      for (NodeId u : s[m - 2]) next.erase(u);
    s.push_back(next);
  }
  s.erase(s.begin());
  return s;
}

// All-pairs hop distances (Floyd-Warshall).
inline std::vector<std::vector<unsigned>> hop_distances(const Hin& g) {
  const std::size_t n = g.node_count();
  const unsigned inf = std::numeric_limits<unsigned>::max() / 2;
  std::vector<std::vector<unsigned>> d(n, std::vector<unsigned>(n, inf));
  for (NodeId v = 0; v < n; ++v) {
    d[v][v] = 0;
    for (NodeId u : g.neighbors(v)) d[v][u] = 1;
  }
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) d[i][j] = std::min(d[i][j], d[i][k] + d[k][j]);
  return d;
}

}  // namespace aidroid::testing
