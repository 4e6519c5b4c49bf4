#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace aidroid {

// Entity types. The enumerator order is the fixed BFS order used by Hin2Img
// (app, signature, affiliation, IMEI, API) and also orders adjacency groups.
enum class NodeType : std::uint8_t { App = 0, Sig = 1, Aff = 2, Imei = 3, Api = 4 };

inline constexpr std::size_t kNumNodeTypes = 5;
inline constexpr std::array<NodeType, kNumNodeTypes> kAllNodeTypes = {
    NodeType::App, NodeType::Sig, NodeType::Aff, NodeType::Imei, NodeType::Api};

// R1..R6. Each relation joins exactly one unordered pair of entity types.
enum class RelationType : std::uint8_t {
  Invoke = 1,     // R1 APP-API
  Exist = 2,      // R2 APP-IMEI
  Certify = 3,    // R3 APP-SIG
  Associate = 4,  // R4 APP-AFF
  Have = 5,       // R5 IMEI-SIG
  Possess = 6,    // R6 IMEI-AFF
};

using NodeId = std::uint32_t;

std::string_view to_string(NodeType t);
std::string_view to_string(RelationType r);
std::optional<NodeType> parse_node_type(std::string_view s);

// Schema lookup; nullopt when no relation joins the two types.
std::optional<RelationType> relation_between(NodeType a, NodeType b);

// Endpoint types of a relation, schema source first (APP for R1-R4, IMEI for R5/R6).
std::pair<NodeType, NodeType> relation_endpoints(RelationType r);

inline std::size_t type_index(NodeType t) { return static_cast<std::size_t>(t); }

// Typed, undirected, deduplicated multigraph over the fixed network schema.
// Adjacency is grouped per neighbor type and each group is sorted by NodeId.
// Construction is single-writer; a built graph may be shared for reads.
class Hin {
 public:
  NodeId add_node(NodeType type, std::string key);

  // Returns the relation inferred from the endpoint types. Re-adding an
  // existing edge is a no-op.
  RelationType add_edge(NodeId src, NodeId dst);

  // Undoes the latest add_node together with that node's edges in
  // O(degree). Used to attach a transient arrival and detach it again.
  void remove_last_node();

  std::optional<NodeId> find(NodeType type, std::string_view key) const;
  NodeId get_or_add(NodeType type, std::string_view key);

  std::size_t node_count() const { return types_.size(); }
  std::size_t edge_count() const { return edge_count_; }
  bool contains(NodeId v) const { return v < types_.size(); }

  NodeType type(NodeId v) const { return types_.at(v); }
  const std::string& key(NodeId v) const { return keys_.at(v); }
  // "TYPE:key", the token used in corpus and embedding files.
  std::string label(NodeId v) const;

  std::span<const NodeId> neighbors_of_type(NodeId v, NodeType t) const;
  std::size_t degree(NodeId v) const;
  // All neighbors in (type order, NodeId) order.
  std::vector<NodeId> neighbors(NodeId v) const;
  std::vector<NodeId> nodes_of_type(NodeType t) const;

  // Checks symmetry, ordering, schema conformity and the edge count.
  // Throws SchemaViolationError on the first violated invariant.
  void validate() const;

  // Subgraph over the nodes accepted by `keep`, with ids reassigned in
  // canonical (type, key) order so the result depends only on the kept node
  // and edge sets, not on the insertion history of this graph.
  Hin induced_subgraph(const std::function<bool(NodeId)>& keep) const;

 private:
  struct KeyHash {
    using is_transparent = void;
    std::size_t operator()(std::string_view s) const { return std::hash<std::string_view>{}(s); }
  };
  using KeyIndex = std::unordered_map<std::string, NodeId, KeyHash, std::equal_to<>>;

  std::vector<NodeType> types_;
  std::vector<std::string> keys_;
  std::vector<std::array<std::vector<NodeId>, kNumNodeTypes>> adjacency_;
  std::array<KeyIndex, kNumNodeTypes> index_;
  std::size_t edge_count_ = 0;
};

// Edge-list text format: src_type<TAB>src_key<TAB>dst_type<TAB>dst_key per
// line, '#' starts a comment line. Relations are inferred from the types.
void read_edge_list(std::istream& in, Hin& hin, const std::string& source = "<edges>");
Hin load_edge_list(const std::string& path);
void write_edge_list(std::ostream& out, const Hin& hin);
void save_edge_list(const std::string& path, const Hin& hin);

}  // namespace aidroid
