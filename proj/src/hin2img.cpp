#include "aidroid/hin2img.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <istream>
#include <numeric>
#include <ostream>

#include <json.hpp>

#include "aidroid/error.hpp"

namespace aidroid {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

NeighborBudget::NeighborBudget(std::vector<std::uint32_t> rows) : rows_per_order(std::move(rows)) { validate(); }

NeighborBudget NeighborBudget::split(std::uint32_t k, std::uint32_t t) {
  if (k < 1) throw InputError("neighbor order k must be >= 1");
  if (t < 1 + k) throw InputError("t must leave at least one row per order");
  const std::uint64_t weight_sum = (std::uint64_t{1} << k) - 1;
  std::vector<std::uint32_t> rows(k);
  std::uint32_t used = 0;
  for (std::uint32_t m = 0; m + 1 < k; ++m) {
    rows[m] = std::max<std::uint32_t>(1, static_cast<std::uint32_t>((t - 1) * (std::uint64_t{1} << m) / weight_sum));
    used += rows[m];
  }
  if (used >= t - 1) throw InputError("t too small for k orders");
  rows[k - 1] = t - 1 - used;
  return NeighborBudget(std::move(rows));
}

std::uint32_t NeighborBudget::total_rows() const {
  return 1 + std::accumulate(rows_per_order.begin(), rows_per_order.end(), std::uint32_t{0});
}

std::uint32_t NeighborBudget::block_offset(std::uint32_t m) const {
  return 1 + std::accumulate(rows_per_order.begin(), rows_per_order.begin() + (m - 1), std::uint32_t{0});
}

void NeighborBudget::validate() const {
  if (rows_per_order.empty()) throw InputError("neighbor budget needs k >= 1");
  if (total_rows() < 2) throw InputError("neighbor budget needs t >= 2");
}

bool ReprMatrix::row_is_zero(std::size_t r) const {
  const auto v = row(r);
  return std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; });
}

void sort_by_type_order(const Hin& hin, std::vector<NodeId>& nodes) {
  std::sort(nodes.begin(), nodes.end(), [&](NodeId a, NodeId b) {
    const auto ta = hin.type(a), tb = hin.type(b);
    return ta != tb ? ta < tb : a < b;
  });
}

std::vector<std::vector<NodeId>> k_order_neighbors(const Hin& hin, NodeId v, std::uint32_t k) {
  std::vector<std::vector<NodeId>> rings;
  rings.reserve(k);
  // prev2 = S^(m-2), prev1 = S^(m-1), both kept sorted by NodeId for lookup.
  std::vector<NodeId> prev2;
  std::vector<NodeId> prev1{v};
  for (std::uint32_t m = 1; m <= k; ++m) {
    std::vector<NodeId> next;
    for (NodeId z : prev1) {
      for (NodeType t : kAllNodeTypes) {
        for (NodeId u : hin.neighbors_of_type(z, t)) {
          if (!std::binary_search(prev1.begin(), prev1.end(), u) &&
              !std::binary_search(prev2.begin(), prev2.end(), u)) {
            next.push_back(u);
          }
        }
      }
    }
    std::sort(next.begin(), next.end());
    next.erase(std::unique(next.begin(), next.end()), next.end());
    prev2 = std::move(prev1);
    prev1 = next;
    sort_by_type_order(hin, next);
    rings.push_back(std::move(next));
  }
  return rings;
}

ReprMatrix build_repr_matrix(const Hin& hin, const EmbeddingTable& table, NodeId v, const NeighborBudget& budget) {
  const std::size_t d = table.dim();
  ReprMatrix out(budget.total_rows(), d);
  auto copy_row = [&](std::size_t r, NodeId u) {
    const auto e = table.find(u);
    if (!e.empty()) std::copy(e.begin(), e.end(), out.row(r).begin());
  };
  copy_row(0, v);
  const auto rings = k_order_neighbors(hin, v, budget.max_order());
  for (std::uint32_t m = 1; m <= budget.max_order(); ++m) {
    const auto& ring = rings[m - 1];
    const std::size_t n = std::min<std::size_t>(ring.size(), budget.rows_per_order[m - 1]);
    const std::size_t offset = budget.block_offset(m);
    for (std::size_t i = 0; i < n; ++i) copy_row(offset + i, ring[i]);
  }
  return out;
}

std::vector<double> local_avg(const Hin& hin, const EmbeddingTable& table, NodeId v) {
  std::vector<double> mean(table.dim(), 0.0);
  std::size_t found = 0;
  for (NodeType t : kAllNodeTypes) {
    for (NodeId u : hin.neighbors_of_type(v, t)) {
      const auto e = table.find(u);
      if (e.empty()) continue;
      for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += e[i];
      ++found;
    }
  }
  if (found > 0) {
    for (double& x : mean) x /= static_cast<double>(found);
  }
  return mean;
}

ReprMatrix single_row_matrix(std::span<const double> vec, std::size_t t) {
  ReprMatrix out(t, vec.size());
  std::copy(vec.begin(), vec.end(), out.row(0).begin());
  return out;
}

void write_matrix_binary(std::ostream& out, const ReprMatrix& m) {
  const auto t = static_cast<std::int32_t>(m.rows);
  const auto d = static_cast<std::int32_t>(m.cols);
  out.write(reinterpret_cast<const char*>(&t), sizeof t);
  out.write(reinterpret_cast<const char*>(&d), sizeof d);
  out.write(reinterpret_cast<const char*>(m.values.data()),
            static_cast<std::streamsize>(m.values.size() * sizeof(double)));
}

ReprMatrix read_matrix_binary(std::istream& in) {
  std::int32_t t = 0, d = 0;
  in.read(reinterpret_cast<char*>(&t), sizeof t);
  in.read(reinterpret_cast<char*>(&d), sizeof d);
  if (!in || t < 0 || d < 0) throw InputError("bad matrix header");
  ReprMatrix m(static_cast<std::size_t>(t), static_cast<std::size_t>(d));
  in.read(reinterpret_cast<char*>(m.values.data()), static_cast<std::streamsize>(m.values.size() * sizeof(double)));
  if (!in) throw InputError("truncated matrix payload");
  return m;
}

std::string matrix_to_json(const ReprMatrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t r = 0; r < m.rows; ++r) {
    const auto row = m.row(r);
    rows.push_back(std::vector<double>(row.begin(), row.end()));
  }
  return nlohmann::json{{"t", m.rows}, {"d", m.cols}, {"rows", rows}}.dump();
}

}  // namespace aidroid
