#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "aidroid/hin.hpp"
#include "aidroid/random.hpp"

namespace aidroid {

// A type sequence over the schema that starts and ends at APP.
struct MetaPath {
  std::string id;
  std::vector<NodeType> types;

  // Throws InputError unless length >= 3, both ends are APP and every hop
  // is a schema relation.
  void validate() const;
  std::string to_string() const;  // "PID1: APP-API-APP"
};

// Parses "PID5: APP-AFF-IMEI-AFF-APP".
MetaPath parse_meta_path(std::string_view line);

class MetaPathSet {
 public:
  MetaPathSet() = default;
  explicit MetaPathSet(std::vector<MetaPath> paths);

  const std::vector<MetaPath>& paths() const { return paths_; }
  std::size_t size() const { return paths_.size(); }
  const MetaPath& operator[](std::size_t i) const { return paths_[i]; }

  // Number of member paths whose first hop is APP -> t.
  std::size_t lambda(NodeType t) const { return lambda_[type_index(t)]; }

 private:
  std::vector<MetaPath> paths_;
  std::array<std::size_t, kNumNodeTypes> lambda_{};
};

// One meta-path per line, '#' comments and blank lines ignored. Lines of the
// form "GROUP: PID1 PID3" (after the paths they name) split the file into
// walk groups; without GROUP lines all paths form a single group.
std::vector<MetaPathSet> read_meta_path_groups(std::istream& in);
std::vector<MetaPathSet> load_meta_path_groups(const std::string& path);

// PID1..PID6 as reconstructed for the app HIN.
std::vector<MetaPath> default_meta_paths();
// {PID1}, {PID3, PID4}, {PID2, PID5, PID6}.
std::vector<MetaPathSet> default_meta_path_groups();

struct WalkConfig {
  std::uint32_t walks_per_node = 20;  // r
  std::uint32_t walk_length = 50;     // l, counted in nodes
  std::uint64_t seed = 1;
  unsigned threads = 1;

  void validate() const;
};

// Position inside the active meta-path: the walker sits on types[position].
struct WalkState {
  std::size_t path = 0;
  std::size_t position = 0;
};

using Transition = std::pair<NodeId, double>;

// Next-step distribution at v. At APP nodes the state is ignored: each
// neighbor u of a type T with lambda(T) > 0 gets (lambda(T)/|S|) / |N_T(v)|,
// renormalized over the types that have neighbors. Elsewhere the next type
// comes from the state and the choice is uniform over that type's neighbors.
// An empty result is a dead end.
std::vector<Transition> transition_weights(const Hin& hin, NodeId v, const WalkState& state,
                                           const MetaPathSet& paths);

// Walk of at most `length` nodes from an APP node. The active meta-path is
// resampled at every APP visit and the walk stops at a dead end. When
// `trace` is given it receives, for every step taken, the state that
// transition_weights() needs to reproduce that step's distribution.
std::vector<NodeId> generate_walk(const Hin& hin, NodeId start, std::size_t length, const MetaPathSet& paths,
                                  Rng& rng, std::vector<WalkState>* trace = nullptr);

// True if every consecutive pair is an edge and the type sequence, cut at
// each APP, is made of prefixes of member paths.
bool walk_conforms(const Hin& hin, std::span<const NodeId> walk, const MetaPathSet& paths);

struct WalkCorpus {
  std::vector<std::vector<NodeId>> walks;

  std::size_t token_count() const;
  void append(WalkCorpus other);
};

// r walks per start node, ordered round by round. Each start node draws from
// its own substream of cfg.seed so any thread count gives the same corpus.
WalkCorpus build_corpus(const Hin& hin, const WalkConfig& cfg, const MetaPathSet& paths,
                        std::span<const NodeId> app_nodes);

// One walk per line, space-separated TYPE:key tokens.
void write_corpus(std::ostream& out, const Hin& hin, const WalkCorpus& corpus);
WalkCorpus read_corpus(std::istream& in, const Hin& hin, const std::string& source = "<corpus>");

// Resolves a "TYPE:key" token against a graph.
std::optional<NodeId> resolve_token(const Hin& hin, std::string_view token);

}  // namespace aidroid
