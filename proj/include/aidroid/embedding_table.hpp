#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "aidroid/hin.hpp"

namespace aidroid {

// d-dimensional vectors for a subset of the nodes of one graph, indexed by
// that graph's NodeIds. Use rebind() to look the same vectors up from a
// different graph that shares node keys.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  EmbeddingTable(std::size_t dim, std::size_t node_capacity);

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return count_; }
  std::size_t node_capacity() const { return row_of_.size(); }

  bool contains(NodeId v) const { return v < row_of_.size() && row_of_[v] != kNoRow; }
  // Empty span when v has no vector.
  std::span<const double> find(NodeId v) const;
  std::span<const double> at(NodeId v) const;  // throws ReferenceError
  void set(NodeId v, std::span<const double> values);

  // Present nodes in NodeId order.
  std::vector<NodeId> nodes() const;

  // Same vectors keyed by the nodes of `to` with matching (type, key).
  // Nodes of `from` missing from `to` are dropped.
  EmbeddingTable rebind(const Hin& from, const Hin& to) const;

  bool all_finite() const;

  bool operator==(const EmbeddingTable&) const = default;

 private:
  static constexpr std::size_t kNoRow = static_cast<std::size_t>(-1);
  std::size_t dim_ = 0;
  std::size_t count_ = 0;
  std::vector<std::size_t> row_of_;
  std::vector<double> data_;
};

// Text format: "N d", then "TYPE:key v1 ... vd" per node, 17 significant
// digits so doubles round-trip exactly.
void write_embeddings(std::ostream& out, const Hin& hin, const EmbeddingTable& table);
void save_embeddings(const std::string& path, const Hin& hin, const EmbeddingTable& table);
// Every token must resolve to a node of `hin` (ReferenceError otherwise).
EmbeddingTable read_embeddings(std::istream& in, const Hin& hin, const std::string& source = "<embeddings>");
EmbeddingTable load_embeddings(const std::string& path, const Hin& hin);

// Shortest decimal-free formatting helper shared by the text writers.
std::string format_double(double x);

}  // namespace aidroid
