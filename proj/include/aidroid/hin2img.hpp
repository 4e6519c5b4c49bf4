#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "aidroid/embedding_table.hpp"
#include "aidroid/hin.hpp"

namespace aidroid {

// Row budget of the representation matrix: one row for the node itself and
// rows_per_order[m-1] rows for its order-m neighbors.
struct NeighborBudget {
  std::vector<std::uint32_t> rows_per_order;

  NeighborBudget() : NeighborBudget(split(2, 64)) {}
  explicit NeighborBudget(std::vector<std::uint32_t> rows);

  // Spreads t - 1 rows over k orders with weights 1:2:4:..., remainder to the
  // last order. split(2, 64) gives {21, 42}.
  static NeighborBudget split(std::uint32_t k, std::uint32_t t);

  std::uint32_t max_order() const { return static_cast<std::uint32_t>(rows_per_order.size()); }
  std::uint32_t total_rows() const;
  // First row of the order-m block (m >= 1).
  std::uint32_t block_offset(std::uint32_t m) const;

  void validate() const;
};

// Row-major t x d matrix.
struct ReprMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  ReprMatrix() = default;
  ReprMatrix(std::size_t t, std::size_t d) : rows(t), cols(d), values(t * d, 0.0) {}

  std::span<double> row(std::size_t r) { return std::span<double>(values).subspan(r * cols, cols); }
  std::span<const double> row(std::size_t r) const { return std::span<const double>(values).subspan(r * cols, cols); }
  bool row_is_zero(std::size_t r) const;

  bool operator==(const ReprMatrix&) const = default;
};

// Nodes sorted by type in the order APP, SIG, AFF, IMEI, API, then by NodeId.
void sort_by_type_order(const Hin& hin, std::vector<NodeId>& nodes);

// S^(1)..S^(k): S^(1) is the neighbor set, and S^(m) collects the neighbors
// of S^(m-1) minus S^(m-1) and S^(m-2) (S^(0) = {v}), i.e. the BFS rings at
// distance m. Each set is sorted with sort_by_type_order.
std::vector<std::vector<NodeId>> k_order_neighbors(const Hin& hin, NodeId v, std::uint32_t k);

// Row 0 is the node's own embedding; the order-m block lists the first t_m
// order-m neighbors. Rows of nodes without an embedding, and rows past the
// end of a short neighbor set, are zero.
ReprMatrix build_repr_matrix(const Hin& hin, const EmbeddingTable& table, NodeId v, const NeighborBudget& budget);

// Mean embedding of the embedded 1-order neighbors; zero if there are none.
std::vector<double> local_avg(const Hin& hin, const EmbeddingTable& table, NodeId v);

// t x d matrix whose row 0 holds `vec` and every other row is zero. This is
// how a single-vector representation (own embedding or LocalAvg) is fed to
// the classifier, which expects the Hin2Img shape.
ReprMatrix single_row_matrix(std::span<const double> vec, std::size_t t);

// Binary dump: little-endian int32 t, int32 d, then t*d float64 row-major.
void write_matrix_binary(std::ostream& out, const ReprMatrix& m);
ReprMatrix read_matrix_binary(std::istream& in);
// {"t": .., "d": .., "rows": [[...], ...]}
std::string matrix_to_json(const ReprMatrix& m);

}  // namespace aidroid
