#include "aidroid/walker.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include "aidroid/error.hpp"
#include "aidroid/parallel.hpp"

namespace aidroid {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

void MetaPath::validate() const {
  if (types.size() < 3) throw InputError("meta-path " + id + " needs at least 3 types");
  if (types.front() != NodeType::App || types.back() != NodeType::App) {
    throw InputError("meta-path " + id + " must start and end at APP");
  }
  for (std::size_t i = 0; i + 1 < types.size(); ++i) {
    if (!relation_between(types[i], types[i + 1])) {
      throw InputError("meta-path " + id + ": no relation between " + std::string(aidroid::to_string(types[i])) +
                       " and " + std::string(aidroid::to_string(types[i + 1])));
    }
  }
}

std::string MetaPath::to_string() const {
  std::string out = id + ": ";
  for (std::size_t i = 0; i < types.size(); ++i) {
    if (i) out += '-';
    out += aidroid::to_string(types[i]);
  }
  return out;
}

MetaPath parse_meta_path(std::string_view line) {
  const auto colon = line.find(':');
  if (colon == std::string_view::npos) throw InputError("meta-path spec needs 'ID: TYPE-...-TYPE'");
  MetaPath mp;
  mp.id = std::string(trim(line.substr(0, colon)));
  if (mp.id.empty()) throw InputError("meta-path spec has an empty id");
  std::string_view rest = trim(line.substr(colon + 1));
  while (!rest.empty()) {
    const auto dash = rest.find('-');
    const auto tok = trim(rest.substr(0, dash));
    const auto t = parse_node_type(tok);
    if (!t) throw InputError("meta-path " + mp.id + ": unknown type '" + std::string(tok) + "'");
    mp.types.push_back(*t);
    if (dash == std::string_view::npos) break;
    rest = rest.substr(dash + 1);
  }
  mp.validate();
  return mp;
}

MetaPathSet::MetaPathSet(std::vector<MetaPath> paths) : paths_(std::move(paths)) {
  if (paths_.empty()) throw InputError("a meta-path set needs at least one path");
  std::set<std::string> ids;
  for (const auto& p : paths_) {
    p.validate();
    if (!ids.insert(p.id).second) throw InputError("duplicate meta-path id " + p.id);
    ++lambda_[type_index(p.types[1])];
  }
}

std::vector<MetaPathSet> read_meta_path_groups(std::istream& in) {
  std::vector<MetaPath> paths;
  std::vector<std::vector<std::string>> groups;
  std::string line;
  while (std::getline(in, line)) {
    const auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    if (t.starts_with("GROUP:")) {
      std::istringstream ids{std::string(t.substr(6))};
      std::vector<std::string> g;
      for (std::string id; ids >> id;) g.push_back(id);
      if (g.empty()) throw InputError("empty GROUP line");
      groups.push_back(std::move(g));
    } else {
      paths.push_back(parse_meta_path(t));
    }
  }
  if (paths.empty()) throw InputError("no meta-paths given");
  if (groups.empty()) return {MetaPathSet(std::move(paths))};
  std::vector<MetaPathSet> out;
  for (const auto& g : groups) {
    std::vector<MetaPath> members;
    for (const auto& id : g) {
      auto it = std::find_if(paths.begin(), paths.end(), [&](const MetaPath& p) { return p.id == id; });
      if (it == paths.end()) throw InputError("GROUP references unknown meta-path " + id);
      members.push_back(*it);
    }
    out.emplace_back(std::move(members));
  }
  return out;
}

std::vector<MetaPathSet> load_meta_path_groups(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open meta-path file " + path);
  return read_meta_path_groups(in);
}

std::vector<MetaPath> default_meta_paths() {
  return {parse_meta_path("PID1: APP-API-APP"), parse_meta_path("PID2: APP-IMEI-APP"),
          parse_meta_path("PID3: APP-SIG-APP"), parse_meta_path("PID4: APP-AFF-APP"),
          parse_meta_path("PID5: APP-AFF-IMEI-AFF-APP"), parse_meta_path("PID6: APP-SIG-IMEI-SIG-APP")};
}

std::vector<MetaPathSet> default_meta_path_groups() {
  const auto p = default_meta_paths();
  return {MetaPathSet({p[0]}), MetaPathSet({p[2], p[3]}), MetaPathSet({p[1], p[4], p[5]})};
}

void WalkConfig::validate() const {
  if (walks_per_node < 1) throw InputError("walks per node must be >= 1");
  if (walk_length < 2) throw InputError("walk length must be >= 2");
}

std::vector<Transition> transition_weights(const Hin& hin, NodeId v, const WalkState& state,
                                           const MetaPathSet& paths) {
  std::vector<Transition> out;
  if (hin.type(v) == NodeType::App) {
    double mass = 0.0;
    for (NodeType t : kAllNodeTypes) {
      const auto nb = hin.neighbors_of_type(v, t);
      if (paths.lambda(t) > 0 && !nb.empty()) mass += static_cast<double>(paths.lambda(t));
    }
    if (mass == 0.0) return out;
    for (NodeType t : kAllNodeTypes) {
      const auto nb = hin.neighbors_of_type(v, t);
      if (paths.lambda(t) == 0 || nb.empty()) continue;
      // (lambda/|S|)/|N_T| renormalized by the realizable lambda mass / |S|.
      const double w = static_cast<double>(paths.lambda(t)) / mass / static_cast<double>(nb.size());
      for (NodeId u : nb) out.emplace_back(u, w);
    }
    return out;
  }
  if (state.path >= paths.size()) return out;
  const auto& types = paths[state.path].types;
  if (state.position + 1 >= types.size() || types[state.position] != hin.type(v)) return out;
  const auto nb = hin.neighbors_of_type(v, types[state.position + 1]);
  for (NodeId u : nb) out.emplace_back(u, 1.0 / static_cast<double>(nb.size()));
  return out;
}

std::vector<NodeId> generate_walk(const Hin& hin, NodeId start, std::size_t length, const MetaPathSet& paths,
                                  Rng& rng, std::vector<WalkState>* trace) {
  if (hin.type(start) != NodeType::App) throw InputError("walks start at APP nodes");
  std::vector<NodeId> walk{start};
  walk.reserve(length);
  std::vector<std::size_t> candidates;
  candidates.reserve(paths.size());
  WalkState state;
  NodeId v = start;
  while (walk.size() < length) {
    std::span<const NodeId> nb;
    if (hin.type(v) == NodeType::App) {
      // Choosing a realizable path uniformly, then a neighbor uniformly, is
      // exactly the renormalized lambda-weighted distribution.
      candidates.clear();
      for (std::size_t k = 0; k < paths.size(); ++k) {
        if (!hin.neighbors_of_type(v, paths[k].types[1]).empty()) candidates.push_back(k);
      }
      if (candidates.empty()) break;
      if (trace) trace->push_back({});
      state = {candidates[uniform_index(rng, candidates.size())], 1};
      nb = hin.neighbors_of_type(v, paths[state.path].types[1]);
    } else {
      nb = hin.neighbors_of_type(v, paths[state.path].types[state.position + 1]);
      if (nb.empty()) break;
      if (trace) trace->push_back(state);
      ++state.position;
    }
    v = nb[uniform_index(rng, nb.size())];
    walk.push_back(v);
  }
  return walk;
}

bool walk_conforms(const Hin& hin, std::span<const NodeId> walk, const MetaPathSet& paths) {
  if (walk.empty() || hin.type(walk.front()) != NodeType::App) return false;
  for (std::size_t i = 0; i + 1 < walk.size(); ++i) {
    const auto nb = hin.neighbors_of_type(walk[i], hin.type(walk[i + 1]));
    if (!std::binary_search(nb.begin(), nb.end(), walk[i + 1])) return false;
  }
  auto is_prefix = [&](std::size_t begin, std::size_t end) {  // walk[begin, end)
    const std::size_t len = end - begin;
    for (const auto& p : paths.paths()) {
      if (p.types.size() < len) continue;
      bool ok = true;
      for (std::size_t i = 0; i < len && ok; ++i) ok = p.types[i] == hin.type(walk[begin + i]);
      if (ok) return true;
    }
    return false;
  };
  std::size_t seg = 0;
  for (std::size_t i = 1; i < walk.size(); ++i) {
    if (hin.type(walk[i]) == NodeType::App) {
      if (!is_prefix(seg, i + 1)) return false;
      seg = i;
    }
  }
  return seg + 1 == walk.size() || is_prefix(seg, walk.size());
}

std::size_t WalkCorpus::token_count() const {
  std::size_t n = 0;
  for (const auto& w : walks) n += w.size();
  return n;
}

void WalkCorpus::append(WalkCorpus other) {
  walks.insert(walks.end(), std::make_move_iterator(other.walks.begin()),
               std::make_move_iterator(other.walks.end()));
}

WalkCorpus build_corpus(const Hin& hin, const WalkConfig& cfg, const MetaPathSet& paths,
                        std::span<const NodeId> app_nodes) {
  cfg.validate();
  if (app_nodes.empty()) throw EmptyInputError("no start nodes for the walk corpus");
  const std::size_t n = app_nodes.size();
  WalkCorpus corpus;
  corpus.walks.resize(n * cfg.walks_per_node);
  parallel_for_blocks(n, cfg.threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t j = begin; j < end; ++j) {
      Rng rng(derive_seed(cfg.seed, {j}));
      for (std::uint32_t round = 0; round < cfg.walks_per_node; ++round) {
        corpus.walks[round * n + j] = generate_walk(hin, app_nodes[j], cfg.walk_length, paths, rng);
      }
    }
  });
  return corpus;
}

void write_corpus(std::ostream& out, const Hin& hin, const WalkCorpus& corpus) {
  for (const auto& walk : corpus.walks) {
    for (std::size_t i = 0; i < walk.size(); ++i) {
      if (i) out << ' ';
      out << hin.label(walk[i]);
    }
    out << '\n';
  }
}

std::optional<NodeId> resolve_token(const Hin& hin, std::string_view token) {
  const auto colon = token.find(':');
  if (colon == std::string_view::npos) return std::nullopt;
  const auto type = parse_node_type(token.substr(0, colon));
  if (!type) return std::nullopt;
  return hin.find(*type, token.substr(colon + 1));
}

WalkCorpus read_corpus(std::istream& in, const Hin& hin, const std::string& source) {
  WalkCorpus corpus;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream tokens(line);
    std::vector<NodeId> walk;
    for (std::string tok; tokens >> tok;) {
      const auto id = resolve_token(hin, tok);
      if (!id) throw ParseError(source, lineno, "unknown node token '" + tok + "'");
      walk.push_back(*id);
    }
    if (!walk.empty()) corpus.walks.push_back(std::move(walk));
  }
  return corpus;
}

}  // namespace aidroid
