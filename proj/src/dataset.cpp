#include "aidroid/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

#include "aidroid/error.hpp"
#include "aidroid/random.hpp"

namespace aidroid {

void LabeledDataset::validate() const {
  for (const auto& [v, label] : labels) {
    if (!hin.contains(v) || hin.type(v) != NodeType::App) {
      throw InputError("label attached to a non-APP node");
    }
  }
  if (!std::is_sorted(in_sample.begin(), in_sample.end()) ||
      !std::is_sorted(out_of_sample.begin(), out_of_sample.end())) {
    throw InputError("split lists must be sorted");
  }
  std::vector<NodeId> all;
  std::set_union(in_sample.begin(), in_sample.end(), out_of_sample.begin(), out_of_sample.end(),
                 std::back_inserter(all));
  if (all.size() != in_sample.size() + out_of_sample.size()) {
    throw InputError("in-sample and out-of-sample sets intersect");
  }
  if (all.size() != labels.size() ||
      !std::equal(all.begin(), all.end(), labels.begin(), [](NodeId v, const auto& kv) { return v == kv.first; })) {
    throw InputError("split does not partition the labeled apps");
  }
}

void assign_split(LabeledDataset& ds, double holdout_fraction, std::uint64_t seed) {
  if (!(holdout_fraction >= 0.0 && holdout_fraction < 1.0)) {
    throw InputError("holdout fraction must lie in [0, 1)");
  }
  std::vector<NodeId> apps;
  apps.reserve(ds.labels.size());
  for (const auto& kv : ds.labels) apps.push_back(kv.first);
  Rng rng(derive_seed(seed, {0x5b117}));
  shuffle(apps.begin(), apps.end(), rng);
  const auto n_out = static_cast<std::size_t>(std::floor(holdout_fraction * static_cast<double>(apps.size())));
  ds.out_of_sample.assign(apps.begin(), apps.begin() + static_cast<std::ptrdiff_t>(n_out));
  ds.in_sample.assign(apps.begin() + static_cast<std::ptrdiff_t>(n_out), apps.end());
  std::sort(ds.out_of_sample.begin(), ds.out_of_sample.end());
  std::sort(ds.in_sample.begin(), ds.in_sample.end());
}

std::map<NodeId, Label> read_labels(std::istream& in, const Hin& hin, const std::string& source) {
  std::map<NodeId, Label> labels;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos) {
      throw ParseError(source, lineno, "expected app_key<TAB>label");
    }
    const std::string key = line.substr(0, tab);
    const std::string value = line.substr(tab + 1);
    if (value != "0" && value != "1") throw ParseError(source, lineno, "label must be 0 or 1");
    const auto id = hin.find(NodeType::App, key);
    if (!id) throw ReferenceError(source + ":" + std::to_string(lineno) + ": unknown app '" + key + "'");
    if (!labels.emplace(*id, value == "1" ? Label::Malicious : Label::Benign).second) {
      throw ParseError(source, lineno, "duplicate label for '" + key + "'");
    }
  }
  return labels;
}

void write_labels(std::ostream& out, const Hin& hin, const std::map<NodeId, Label>& labels) {
  for (const auto& [v, label] : labels) out << hin.key(v) << '\t' << static_cast<int>(label) << '\n';
}

LabeledDataset load_dataset(const std::string& edge_path, const std::string& label_path,
                            double holdout_fraction, std::uint64_t seed) {
  LabeledDataset ds;
  ds.hin = load_edge_list(edge_path);
  std::ifstream in(label_path);
  if (!in) throw InputError("cannot open label file " + label_path);
  ds.labels = read_labels(in, ds.hin, label_path);
  assign_split(ds, holdout_fraction, seed);
  return ds;
}

void SynthConfig::validate() const {
  if (n_apps_per_class < 1 || n_api < 1 || n_imei < 1 || n_sig < 1 || n_aff < 1) {
    throw InputError("synthetic pool sizes must be >= 1");
  }
  if (!(0.0 <= p_inter && p_inter < p_intra && p_intra <= 1.0)) {
    throw InputError("need 0 <= p_inter < p_intra <= 1");
  }
  for (double m : {mean_degree_api, mean_degree_imei, mean_degree_sig, mean_degree_aff}) {
    if (!(m > 0.0)) throw InputError("mean degrees must be positive");
  }
  if (!(holdout_fraction >= 0.0 && holdout_fraction < 1.0)) {
    throw InputError("holdout fraction must lie in [0, 1)");
  }
}

namespace {

struct Pool {
  std::vector<NodeId> nodes;

  // Half owned by class c; for odd sizes the middle node is shared.
  std::span<const NodeId> half(int c) const {
    const std::size_t n = nodes.size();
    const std::size_t lo = c == 0 ? 0 : n / 2;
    const std::size_t hi = c == 0 ? (n + 1) / 2 : n;
    return std::span<const NodeId>(nodes).subspan(lo, hi - lo);
  }
};

Pool make_pool(Hin& hin, NodeType type, const char* prefix, std::uint32_t n) {
  Pool pool;
  pool.nodes.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) pool.nodes.push_back(hin.add_node(type, prefix + std::to_string(i)));
  return pool;
}

}  // namespace

LabeledDataset synth_hin(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(derive_seed(cfg.seed, {0x517e}));
  LabeledDataset ds;
  Hin& hin = ds.hin;

  // Class membership is shuffled over app ids so NodeId order carries no
  // class information (Hin2Img truncates neighbor blocks in id order).
  const std::uint32_t n_apps = 2 * cfg.n_apps_per_class;
  std::vector<int> app_class(n_apps);
  for (std::uint32_t i = 0; i < n_apps; ++i) app_class[i] = i < cfg.n_apps_per_class ? 0 : 1;
  shuffle(app_class.begin(), app_class.end(), rng);

  std::vector<NodeId> apps;
  apps.reserve(n_apps);
  for (std::uint32_t i = 0; i < n_apps; ++i) {
    apps.push_back(hin.add_node(NodeType::App, "app" + std::to_string(i)));
    ds.labels.emplace(apps.back(), app_class[i] == 1 ? Label::Malicious : Label::Benign);
  }
  const Pool apis = make_pool(hin, NodeType::Api, "api", cfg.n_api);
  const Pool imeis = make_pool(hin, NodeType::Imei, "imei", cfg.n_imei);
  const Pool sigs = make_pool(hin, NodeType::Sig, "sig", cfg.n_sig);
  const Pool affs = make_pool(hin, NodeType::Aff, "aff", cfg.n_aff);

  const double own_half = cfg.p_intra / (cfg.p_intra + cfg.p_inter);
  const std::pair<const Pool*, double> relations[] = {{&apis, cfg.mean_degree_api},
                                                      {&imeis, cfg.mean_degree_imei},
                                                      {&sigs, cfg.mean_degree_sig},
                                                      {&affs, cfg.mean_degree_aff}};
  for (std::uint32_t i = 0; i < n_apps; ++i) {
    for (const auto& [pool, mean] : relations) {
      const std::uint32_t links = poisson(rng, mean);
      for (std::uint32_t l = 0; l < links; ++l) {
        const int side = bernoulli(rng, own_half) ? app_class[i] : 1 - app_class[i];
        const auto half = pool->half(side);
        hin.add_edge(apps[i], half[uniform_index(rng, half.size())]);
      }
    }
  }

  // R5/R6 from co-installation: a phone has every signature and affiliation
  // of the apps installed on it.
  for (NodeId m : imeis.nodes) {
    const auto installed = hin.neighbors_of_type(m, NodeType::App);
    const std::vector<NodeId> apps_on_phone(installed.begin(), installed.end());
    for (NodeId a : apps_on_phone) {
      for (NodeType t : {NodeType::Sig, NodeType::Aff}) {
        const auto ents = hin.neighbors_of_type(a, t);
        const std::vector<NodeId> copy(ents.begin(), ents.end());
        for (NodeId e : copy) hin.add_edge(m, e);
      }
    }
  }

  assign_split(ds, cfg.holdout_fraction, cfg.seed);
  return ds;
}

}  // namespace aidroid
