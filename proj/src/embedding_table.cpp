#include "aidroid/embedding_table.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "aidroid/error.hpp"
#include "aidroid/walker.hpp"

namespace aidroid {

EmbeddingTable::EmbeddingTable(std::size_t dim, std::size_t node_capacity)
    : dim_(dim), row_of_(node_capacity, kNoRow) {
  if (dim == 0) throw InputError("embedding dimension must be >= 1");
}

std::span<const double> EmbeddingTable::find(NodeId v) const {
  if (!contains(v)) return {};
  return std::span<const double>(data_).subspan(row_of_[v] * dim_, dim_);
}

std::span<const double> EmbeddingTable::at(NodeId v) const {
  if (!contains(v)) throw ReferenceError("node " + std::to_string(v) + " has no embedding");
  return find(v);
}

void EmbeddingTable::set(NodeId v, std::span<const double> values) {
  if (values.size() != dim_) throw ShapeError("embedding has wrong dimension");
  if (v >= row_of_.size()) row_of_.resize(v + 1, kNoRow);
  if (row_of_[v] == kNoRow) {
    row_of_[v] = count_++;
    data_.resize(count_ * dim_);
  }
  std::copy(values.begin(), values.end(), data_.begin() + static_cast<std::ptrdiff_t>(row_of_[v] * dim_));
}

std::vector<NodeId> EmbeddingTable::nodes() const {
  std::vector<NodeId> out;
  out.reserve(count_);
  for (NodeId v = 0; v < row_of_.size(); ++v) {
    if (row_of_[v] != kNoRow) out.push_back(v);
  }
  return out;
}

EmbeddingTable EmbeddingTable::rebind(const Hin& from, const Hin& to) const {
  EmbeddingTable out(dim_, to.node_count());
  for (NodeId v : nodes()) {
    if (auto u = to.find(from.type(v), from.key(v))) out.set(*u, find(v));
  }
  return out;
}

bool EmbeddingTable::all_finite() const {
  for (double x : data_) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

std::string format_double(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

void write_embeddings(std::ostream& out, const Hin& hin, const EmbeddingTable& table) {
  out << table.size() << ' ' << table.dim() << '\n';
  for (NodeId v : table.nodes()) {
    out << hin.label(v);
    for (double x : table.find(v)) out << ' ' << format_double(x);
    out << '\n';
  }
}

void save_embeddings(const std::string& path, const Hin& hin, const EmbeddingTable& table) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path);
  write_embeddings(out, hin, table);
}

EmbeddingTable read_embeddings(std::istream& in, const Hin& hin, const std::string& source) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError(source, 1, "missing header");
  std::size_t n = 0, dim = 0;
  {
    std::istringstream header(line);
    if (!(header >> n >> dim) || dim == 0) throw ParseError(source, 1, "header must be 'N d'");
  }
  EmbeddingTable table(dim, hin.node_count());
  std::vector<double> row(dim);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lineno = i + 2;
    if (!std::getline(in, line)) throw ParseError(source, lineno, "truncated file");
    const auto sp = line.find(' ');
    if (sp == std::string::npos) throw ParseError(source, lineno, "missing vector");
    const auto id = resolve_token(hin, std::string_view(line).substr(0, sp));
    if (!id) throw ReferenceError(source + ":" + std::to_string(lineno) + ": unknown node " + line.substr(0, sp));
    const char* p = line.data() + sp;
    const char* end = line.data() + line.size();
    for (std::size_t k = 0; k < dim; ++k) {
      while (p < end && *p == ' ') ++p;
      auto res = std::from_chars(p, end, row[k]);
      if (res.ec != std::errc()) throw ParseError(source, lineno, "bad number");
      p = res.ptr;
    }
    while (p < end && (*p == ' ' || *p == '\r')) ++p;
    if (p != end) throw ParseError(source, lineno, "too many values");
    table.set(*id, row);
  }
  return table;
}

EmbeddingTable load_embeddings(const std::string& path, const Hin& hin) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open embeddings " + path);
  return read_embeddings(in, hin, path);
}

}  // namespace aidroid
