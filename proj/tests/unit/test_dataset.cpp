#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "aidroid/dataset.hpp"
#include "aidroid/error.hpp"
#include "test_util.hpp"

namespace aidroid {
namespace {

struct TinyFiles {
  testing::TempDir dir{"dataset"};
  std::string edges = dir.file("edges.tsv");
  std::string labels = dir.file("labels.tsv");

  explicit TinyFiles(bool bad_label = false) {
    std::ofstream e(edges), l(labels);
    for (int i = 0; i < 10; ++i) {
      e << "APP\ta" << i << "\tAPI\tx" << (i % 3) << "\n";
      l << "a" << i << "\t" << (i % 2) << "\n";
    }
    if (bad_label) l << "ghost\t1\n";
  }
};

TEST(Dataset, HoldoutFloorsTheFraction) {
  TinyFiles f;
  const auto ds = load_dataset(f.edges, f.labels, 0.2, 7);
  EXPECT_EQ(ds.out_of_sample.size(), 2u);
  EXPECT_EQ(ds.in_sample.size(), 8u);
  EXPECT_NO_THROW(ds.validate());
}

TEST(Dataset, SplitIsDeterministic) {
  TinyFiles f;
  const auto a = load_dataset(f.edges, f.labels, 0.3, 7);
  const auto b = load_dataset(f.edges, f.labels, 0.3, 7);
  EXPECT_EQ(a.out_of_sample, b.out_of_sample);
  EXPECT_EQ(a.in_sample, b.in_sample);
}

TEST(Dataset, LabelForAbsentAppIsAReferenceError) {
  TinyFiles f(true);
  EXPECT_THROW(load_dataset(f.edges, f.labels, 0.2, 7), ReferenceError);
}

TEST(Dataset, LabelValueOutsideZeroOneIsAParseError) {
  Hin g;
  g.add_node(NodeType::App, "a");
  std::istringstream in("a\t2\n");
  EXPECT_THROW(read_labels(in, g), ParseError);
}

TEST(Dataset, ValidateRejectsLabelsOnNonApps) {
  LabeledDataset ds;
  const NodeId x = ds.hin.add_node(NodeType::Api, "x");
  ds.labels[x] = Label::Benign;
  ds.in_sample = {x};
  EXPECT_THROW(ds.validate(), InputError);
}

TEST(Synth, SameSeedSameEdges) {
  SynthConfig cfg;
  cfg.n_apps_per_class = 60;
  cfg.seed = 5;
  std::stringstream a, b;
  write_edge_list(a, synth_hin(cfg).hin);
  write_edge_list(b, synth_hin(cfg).hin);
  EXPECT_EQ(a.str(), b.str());
  cfg.seed = 6;
  std::stringstream c;
  write_edge_list(c, synth_hin(cfg).hin);
  EXPECT_NE(a.str(), c.str());
}

TEST(Synth, NoMixingKeepsApisInOwnHalf) {
  SynthConfig cfg;
  cfg.n_apps_per_class = 50;
  cfg.p_inter = 0.0;
  cfg.p_intra = 1.0;
  const auto ds = synth_hin(cfg);
  for (const auto& [app, label] : ds.labels) {
    for (NodeId x : ds.hin.neighbors_of_type(app, NodeType::Api)) {
      const int idx = std::stoi(ds.hin.key(x).substr(3));
      const bool lower_half = idx < static_cast<int>(cfg.n_api / 2);
      EXPECT_EQ(lower_half, label == Label::Benign) << ds.hin.key(app) << " -> " << ds.hin.key(x);
    }
  }
}

TEST(Synth, AppIncidentEdgeCountMatchesPoissonTotal) {
  SynthConfig cfg;
  cfg.n_apps_per_class = 100;
  cfg.mean_degree_api = cfg.mean_degree_imei = cfg.mean_degree_sig = cfg.mean_degree_aff = 5.0;
  // Large pools make duplicate draws (which collapse to one edge) rare.
  cfg.n_api = cfg.n_imei = cfg.n_sig = cfg.n_aff = 20000;
  const auto ds = synth_hin(cfg);
  std::size_t app_edges = 0;
  for (NodeId a : ds.hin.nodes_of_type(NodeType::App)) app_edges += ds.hin.degree(a);
  const double expected = 200 * 4 * 5.0;
  EXPECT_NEAR(static_cast<double>(app_edges), expected, 3 * std::sqrt(expected));
}

TEST(Synth, CoInstallationRelationsAreConsistent) {
  SynthConfig cfg;
  cfg.n_apps_per_class = 80;
  const auto ds = synth_hin(cfg);
  const Hin& g = ds.hin;
  EXPECT_NO_THROW(g.validate());
  for (NodeId m : g.nodes_of_type(NodeType::Imei)) {
    for (NodeType t : {NodeType::Sig, NodeType::Aff}) {
      std::set<NodeId> derived;
      for (NodeId a : g.neighbors_of_type(m, NodeType::App))
        for (NodeId e : g.neighbors_of_type(a, t)) derived.insert(e);
      const auto actual = g.neighbors_of_type(m, t);
      EXPECT_EQ(std::set<NodeId>(actual.begin(), actual.end()), derived);
    }
  }
}

TEST(Synth, SplitPartitionsLabeledApps) {
  SynthConfig cfg;
  cfg.n_apps_per_class = 50;
  cfg.holdout_fraction = 0.2;
  const auto ds = synth_hin(cfg);
  EXPECT_EQ(ds.out_of_sample.size(), 20u);
  EXPECT_EQ(ds.in_sample.size() + ds.out_of_sample.size(), ds.labels.size());
  EXPECT_NO_THROW(ds.validate());
}

TEST(Synth, InvalidConfigIsRejected) {
  SynthConfig cfg;
  cfg.p_inter = 0.95;
  EXPECT_THROW(synth_hin(cfg), InputError);
  cfg = {};
  cfg.n_api = 0;
  EXPECT_THROW(synth_hin(cfg), InputError);
}

}  // namespace
}  // namespace aidroid
