#include "aidroid/hin.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <tuple>

#include "aidroid/error.hpp"

namespace aidroid {

std::string_view to_string(NodeType t) {
  switch (t) {
    case NodeType::App: return "APP";
    case NodeType::Sig: return "SIG";
    case NodeType::Aff: return "AFF";
    case NodeType::Imei: return "IMEI";
    case NodeType::Api: return "API";
  }
  return "?";
}

std::string_view to_string(RelationType r) {
  switch (r) {
    case RelationType::Invoke: return "R1_invoke";
    case RelationType::Exist: return "R2_exist";
    case RelationType::Certify: return "R3_certify";
    case RelationType::Associate: return "R4_associate";
    case RelationType::Have: return "R5_have";
    case RelationType::Possess: return "R6_possess";
  }
  return "?";
}

std::optional<NodeType> parse_node_type(std::string_view s) {
  for (NodeType t : kAllNodeTypes) {
    if (to_string(t) == s) return t;
  }
  return std::nullopt;
}

std::pair<NodeType, NodeType> relation_endpoints(RelationType r) {
  switch (r) {
    case RelationType::Invoke: return {NodeType::App, NodeType::Api};
    case RelationType::Exist: return {NodeType::App, NodeType::Imei};
    case RelationType::Certify: return {NodeType::App, NodeType::Sig};
    case RelationType::Associate: return {NodeType::App, NodeType::Aff};
    case RelationType::Have: return {NodeType::Imei, NodeType::Sig};
    case RelationType::Possess: return {NodeType::Imei, NodeType::Aff};
  }
  return {NodeType::App, NodeType::App};
}

std::optional<RelationType> relation_between(NodeType a, NodeType b) {
  static constexpr RelationType kAll[] = {RelationType::Invoke,  RelationType::Exist,
                                          RelationType::Certify, RelationType::Associate,
                                          RelationType::Have,    RelationType::Possess};
  for (RelationType r : kAll) {
    auto [x, y] = relation_endpoints(r);
    if ((x == a && y == b) || (x == b && y == a)) return r;
  }
  return std::nullopt;
}

NodeId Hin::add_node(NodeType type, std::string key) {
  if (key.empty() || std::any_of(key.begin(), key.end(), [](unsigned char c) { return std::isspace(c); })) {
    throw InputError("invalid node key '" + key + "': keys must be non-empty and contain no whitespace");
  }
  auto& idx = index_[type_index(type)];
  if (idx.contains(key)) {
    throw DuplicateNodeError("duplicate node " + std::string(to_string(type)) + ":" + key);
  }
  const auto id = static_cast<NodeId>(types_.size());
  idx.emplace(key, id);
  types_.push_back(type);
  keys_.push_back(std::move(key));
  adjacency_.emplace_back();
  return id;
}

void Hin::remove_last_node() {
  if (types_.empty()) throw InputError("graph has no nodes to remove");
  const auto v = static_cast<NodeId>(types_.size() - 1);
  const std::size_t own = type_index(types_[v]);
  for (const auto& group : adjacency_[v]) {
    for (NodeId u : group) {
      // v has the largest id, so it sits at the end of every sorted list.
      auto& back = adjacency_[u][own];
      if (back.empty() || back.back() != v) throw SchemaViolationError("adjacency out of order");
      back.pop_back();
      --edge_count_;
    }
  }
  index_[own].erase(keys_[v]);
  types_.pop_back();
  keys_.pop_back();
  adjacency_.pop_back();
}

RelationType Hin::add_edge(NodeId src, NodeId dst) {
  if (!contains(src) || !contains(dst)) {
    throw ReferenceError("edge endpoint does not exist");
  }
  const auto rel = relation_between(types_[src], types_[dst]);
  if (!rel) {
    throw SchemaViolationError("no relation joins " + label(src) + " and " + label(dst));
  }
  auto& fwd = adjacency_[src][type_index(types_[dst])];
  auto it = std::lower_bound(fwd.begin(), fwd.end(), dst);
  if (it != fwd.end() && *it == dst) return *rel;
  fwd.insert(it, dst);
  auto& bwd = adjacency_[dst][type_index(types_[src])];
  bwd.insert(std::lower_bound(bwd.begin(), bwd.end(), src), src);
  ++edge_count_;
  return *rel;
}

std::optional<NodeId> Hin::find(NodeType type, std::string_view key) const {
  const auto& idx = index_[type_index(type)];
  auto it = idx.find(key);
  if (it == idx.end()) return std::nullopt;
  return it->second;
}

NodeId Hin::get_or_add(NodeType type, std::string_view key) {
  if (auto id = find(type, key)) return *id;
  return add_node(type, std::string(key));
}

std::string Hin::label(NodeId v) const {
  return std::string(to_string(type(v))) + ":" + key(v);
}

std::span<const NodeId> Hin::neighbors_of_type(NodeId v, NodeType t) const {
  return adjacency_.at(v)[type_index(t)];
}

std::size_t Hin::degree(NodeId v) const {
  std::size_t d = 0;
  for (const auto& group : adjacency_.at(v)) d += group.size();
  return d;
}

std::vector<NodeId> Hin::neighbors(NodeId v) const {
  std::vector<NodeId> out;
  out.reserve(degree(v));
  for (const auto& group : adjacency_.at(v)) out.insert(out.end(), group.begin(), group.end());
  return out;
}

std::vector<NodeId> Hin::nodes_of_type(NodeType t) const {
  std::vector<NodeId> out;
  for (NodeId v = 0; v < types_.size(); ++v) {
    if (types_[v] == t) out.push_back(v);
  }
  return out;
}

void Hin::validate() const {
  std::size_t endpoint_total = 0;
  std::array<bool, kNumNodeTypes> seen{};
  for (NodeId v = 0; v < types_.size(); ++v) {
    seen[type_index(types_[v])] = true;
    for (NodeType t : kAllNodeTypes) {
      const auto& group = adjacency_[v][type_index(t)];
      endpoint_total += group.size();
      if (!std::is_sorted(group.begin(), group.end()) ||
          std::adjacent_find(group.begin(), group.end()) != group.end()) {
        throw SchemaViolationError("adjacency of " + label(v) + " is not strictly sorted");
      }
      for (NodeId u : group) {
        if (types_.at(u) != t) throw SchemaViolationError("mis-grouped neighbor of " + label(v));
        if (!relation_between(types_[v], t)) {
          throw SchemaViolationError("edge " + label(v) + " - " + label(u) + " violates the schema");
        }
        const auto& back = adjacency_[u][type_index(types_[v])];
        if (!std::binary_search(back.begin(), back.end(), v)) {
          throw SchemaViolationError("asymmetric edge " + label(v) + " - " + label(u));
        }
      }
    }
  }
  if (endpoint_total != 2 * edge_count_) throw SchemaViolationError("edge count mismatch");
  if (!types_.empty() && std::count(seen.begin(), seen.end(), true) < 2 && edge_count_ > 0) {
    throw SchemaViolationError("a HIN needs more than one entity type");
  }
}

Hin Hin::induced_subgraph(const std::function<bool(NodeId)>& keep) const {
  std::vector<NodeId> kept;
  for (NodeId v = 0; v < types_.size(); ++v) {
    if (keep(v)) kept.push_back(v);
  }
  std::sort(kept.begin(), kept.end(), [this](NodeId a, NodeId b) {
    return std::tie(types_[a], keys_[a]) < std::tie(types_[b], keys_[b]);
  });
  constexpr NodeId kAbsent = static_cast<NodeId>(-1);
  std::vector<NodeId> remap(types_.size(), kAbsent);
  Hin sub;
  for (NodeId v : kept) remap[v] = sub.add_node(types_[v], keys_[v]);
  for (NodeId v : kept) {
    for (const auto& group : adjacency_[v]) {
      for (NodeId u : group) {
        if (remap[u] != kAbsent && remap[v] < remap[u]) sub.add_edge(remap[v], remap[u]);
      }
    }
  }
  return sub;
}

namespace {

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find('\t', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

}  // namespace

void read_edge_list(std::istream& in, Hin& hin, const std::string& source) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const auto fields = split_tabs(line);
    if (fields.size() != 4) {
      throw ParseError(source, lineno, "expected 4 tab-separated fields, got " + std::to_string(fields.size()));
    }
    const auto st = parse_node_type(fields[0]);
    const auto dt = parse_node_type(fields[2]);
    if (!st || !dt) throw ParseError(source, lineno, "unknown node type");
    try {
      const NodeId s = hin.get_or_add(*st, fields[1]);
      const NodeId d = hin.get_or_add(*dt, fields[3]);
      hin.add_edge(s, d);
    } catch (const Error& e) {
      throw ParseError(source, lineno, e.what());
    }
  }
}

Hin load_edge_list(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open edge list " + path);
  Hin hin;
  read_edge_list(in, hin, path);
  return hin;
}

void write_edge_list(std::ostream& out, const Hin& hin) {
  for (NodeId v = 0; v < hin.node_count(); ++v) {
    for (NodeType t : kAllNodeTypes) {
      const auto rel = relation_between(hin.type(v), t);
      if (!rel || relation_endpoints(*rel).first != hin.type(v)) continue;
      for (NodeId u : hin.neighbors_of_type(v, t)) {
        out << to_string(hin.type(v)) << '\t' << hin.key(v) << '\t' << to_string(t) << '\t' << hin.key(u)
            << '\n';
      }
    }
  }
}

void save_edge_list(const std::string& path, const Hin& hin) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path);
  write_edge_list(out, hin);
}

}  // namespace aidroid
