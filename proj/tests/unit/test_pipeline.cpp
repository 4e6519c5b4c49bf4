#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <sstream>

#include "aidroid/error.hpp"
#include "aidroid/pipeline.hpp"
#include "test_util.hpp"

namespace aidroid {
namespace {

// ---------------------------------------------------------------- metrics

TEST(Metrics, ConfusionCountsFromProductionTable) {
  const auto m = metrics_from_confusion(4395, 13188, 125, 38);
  // Reference values are truncated to four decimals.
  auto d4 = [](double x) { return static_cast<long>(std::floor(x * 1e4)); };
  EXPECT_EQ(d4(m.accuracy), 9908);
  EXPECT_EQ(d4(m.recall), 9914);
  EXPECT_EQ(d4(m.precision), 9723);
  EXPECT_EQ(d4(m.f1), 9817);
  EXPECT_NEAR(m.f1, 8790.0 / 8953.0, 1e-12);
}

TEST(Metrics, PerfectAndConstantPredictors) {
  const std::vector<Label> truth{Label::Benign, Label::Malicious, Label::Benign, Label::Malicious};
  const std::vector<double> perfect_scores{0.1, 0.9, 0.2, 0.8};
  const auto perfect = evaluate(perfect_scores, truth, truth);
  EXPECT_EQ(perfect.accuracy, 1.0);
  EXPECT_EQ(perfect.f1, 1.0);

  const std::vector<Label> benign(4, Label::Benign);
  const std::vector<double> low(4, 0.1);
  const auto constant = evaluate(low, benign, truth);
  EXPECT_EQ(constant.accuracy, 0.5);
  EXPECT_EQ(constant.recall, 0.0);
  EXPECT_EQ(constant.precision, 0.0);
  EXPECT_EQ(constant.f1, 0.0);
}

TEST(Metrics, MismatchedLengthsThrow) {
  const std::vector<Label> truth{Label::Benign};
  const std::vector<Label> pred{Label::Benign, Label::Malicious};
  const std::vector<double> scores{0.1, 0.2};
  EXPECT_THROW(evaluate(scores, pred, truth), InputError);
}

TEST(Roc, EndpointsMonotoneAndTies) {
  Rng rng(3);
  std::vector<double> scores;
  std::vector<Label> truth;
  for (int i = 0; i < 200; ++i) {
    truth.push_back(bernoulli(rng, 0.4) ? Label::Malicious : Label::Benign);
    // Rounded so that many scores tie.
    scores.push_back(std::round(uniform01(rng) * 10) / 10 + (truth.back() == Label::Malicious ? 0.2 : 0.0));
  }
  const auto roc = roc_curve(scores, truth);
  ASSERT_GE(roc.size(), 2u);
  EXPECT_EQ(roc.front().fpr, 0.0);
  EXPECT_EQ(roc.front().tpr, 0.0);
  EXPECT_EQ(roc.back().fpr, 1.0);
  EXPECT_EQ(roc.back().tpr, 1.0);
  for (std::size_t i = 1; i < roc.size(); ++i) {
    EXPECT_GE(roc[i].fpr, roc[i - 1].fpr);
    EXPECT_GE(roc[i].tpr, roc[i - 1].tpr);
    EXPECT_LT(roc[i].threshold, roc[i - 1].threshold);
  }
  std::ostringstream csv;
  write_roc_csv(csv, roc);
  EXPECT_EQ(csv.str().rfind("threshold,fpr,tpr\n", 0), 0u);
}

TEST(Metrics, RecomputedFromDumpedConfusionMatchExactly) {
  const std::vector<Label> truth{Label::Benign, Label::Malicious, Label::Malicious, Label::Benign, Label::Malicious};
  const std::vector<Label> pred{Label::Benign, Label::Malicious, Label::Benign, Label::Malicious, Label::Malicious};
  const std::vector<double> scores{0.2, 0.7, 0.4, 0.6, 0.9};
  const auto m = evaluate(scores, pred, truth);
  const auto j = to_json(m);
  const auto again = metrics_from_confusion(j.at("tp"), j.at("tn"), j.at("fp"), j.at("fn"));
  EXPECT_EQ(again.accuracy, j.at("accuracy").get<double>());
  EXPECT_EQ(again.precision, j.at("precision").get<double>());
  EXPECT_EQ(again.recall, j.at("recall").get<double>());
  EXPECT_EQ(again.f1, j.at("f1").get<double>());
}

// ---------------------------------------------------------------- config

PipelineConfig tiny_config(std::uint64_t seed = 1) {
  PipelineConfig c;
  c.walk.walks_per_node = 3;
  c.walk.walk_length = 12;
  c.skipgram.dimension = 8;
  c.budget = NeighborBudget(std::vector<std::uint32_t>{5, 10});
  c.dnn.epochs = 2;
  c.set_seed(seed);
  c.sync_shapes();
  return c;
}

SynthConfig tiny_synth(std::uint64_t seed = 1) {
  SynthConfig s;
  s.n_apps_per_class = 40;
  s.n_api = 40;
  s.n_imei = 60;
  s.n_sig = 20;
  s.n_aff = 20;
  s.seed = seed;
  return s;
}

TEST(PipelineConfig, JsonRoundTripAndValidation) {
  PipelineConfig c = tiny_config(5);
  c.mode = ReprMode::LocalAvg;
  const auto j = to_json(c);
  const auto back = pipeline_config_from_json(j);
  EXPECT_EQ(to_json(back), j);
  EXPECT_EQ(back.mode, ReprMode::LocalAvg);

  PipelineConfig bad = tiny_config();
  bad.dnn.input_cols = 9;  // disagrees with d
  EXPECT_THROW(bad.validate(), InputError);
  EXPECT_THROW(parse_repr_mode("pixels"), InputError);
}

TEST(PipelineConfig, SeedsAreDerivedPerStage) {
  PipelineConfig a, b;
  a.set_seed(1);
  b.set_seed(2);
  EXPECT_NE(a.walk.seed, a.skipgram.seed);
  EXPECT_NE(a.skipgram.seed, a.dnn.seed);
  EXPECT_NE(a.walk.seed, b.walk.seed);
}

// ---------------------------------------------------------------- small fits

std::string save_to_string(const PipelineArtifacts& art) {
  std::ostringstream emb, model;
  write_embeddings(emb, art.graph, art.embeddings);
  art.model.save(model);
  return emb.str() + "\n--\n" + model.str();
}

TEST(Fit, TrainingGraphExcludesHeldOutApps) {
  const auto ds = synth_hin(tiny_synth());
  const Hin g = training_graph(ds);
  for (NodeId v : ds.out_of_sample) EXPECT_FALSE(g.find(NodeType::App, ds.hin.key(v)).has_value());
  for (NodeId v : ds.in_sample) EXPECT_TRUE(g.find(NodeType::App, ds.hin.key(v)).has_value());
}

TEST(Fit, DeterministicArtifacts) {
  const auto ds = synth_hin(tiny_synth());
  const auto cfg = tiny_config();
  EXPECT_EQ(save_to_string(fit(ds, cfg)), save_to_string(fit(ds, cfg)));
}

TEST(Fit, NoLeakageFromHeldOutApps) {
  const auto ds = synth_hin(tiny_synth(2));
  const auto cfg = tiny_config(2);
  LabeledDataset stripped;
  stripped.hin = ds.hin.induced_subgraph([&](NodeId v) {
    return !std::binary_search(ds.out_of_sample.begin(), ds.out_of_sample.end(), v);
  });
  for (NodeId v : ds.in_sample) {
    const NodeId w = *stripped.hin.find(NodeType::App, ds.hin.key(v));
    stripped.labels[w] = ds.labels.at(v);
    stripped.in_sample.push_back(w);
  }
  std::sort(stripped.in_sample.begin(), stripped.in_sample.end());
  EXPECT_EQ(save_to_string(fit(ds, cfg)), save_to_string(fit(stripped, cfg)));
}

TEST(Fit, InputNodeOrderDoesNotMatter) {
  // Same graph and labels, nodes inserted in reverse order: the samples are
  // visited in the same seed-derived order, so the model is identical.
  const auto ds = synth_hin(tiny_synth(3));
  LabeledDataset rev;
  for (NodeId v = static_cast<NodeId>(ds.hin.node_count()); v-- > 0;) rev.hin.add_node(ds.hin.type(v), ds.hin.key(v));
  for (NodeId v = 0; v < ds.hin.node_count(); ++v)
    for (NodeId u : ds.hin.neighbors(v))
      if (u > v) rev.hin.add_edge(*rev.hin.find(ds.hin.type(v), ds.hin.key(v)), *rev.hin.find(ds.hin.type(u), ds.hin.key(u)));
  auto map_ids = [&](const std::vector<NodeId>& ids) {
    std::vector<NodeId> out;
    for (NodeId v : ids) out.push_back(*rev.hin.find(NodeType::App, ds.hin.key(v)));
    std::sort(out.begin(), out.end());
    return out;
  };
  for (const auto& [v, l] : ds.labels) rev.labels[*rev.hin.find(NodeType::App, ds.hin.key(v))] = l;
  rev.in_sample = map_ids(ds.in_sample);
  rev.out_of_sample = map_ids(ds.out_of_sample);
  const auto cfg = tiny_config(3);
  EXPECT_EQ(save_to_string(fit(ds, cfg)), save_to_string(fit(rev, cfg)));
}

TEST(Fit, SingleClassTrainingSetIsRejected) {
  auto ds = synth_hin(tiny_synth());
  for (auto& [v, l] : ds.labels) l = Label::Benign;
  EXPECT_THROW(fit(ds, tiny_config()), InputError);
}

TEST(Fit, OwnRowDropoutAppliesToHin2ImgOnly) {
  const auto ds = synth_hin(tiny_synth(6));
  auto cfg = tiny_config(6);
  cfg.own_row_dropout = 0.3;
  EXPECT_EQ(fit(ds, cfg).model.config().first_row_dropout, 0.3);
  cfg.mode = ReprMode::LocalAvg;
  EXPECT_EQ(fit(ds, cfg).model.config().first_row_dropout, 0.0);
}

TEST(Artifacts, SaveAndLoadRoundTrip) {
  const auto ds = synth_hin(tiny_synth(4));
  const auto art = fit(ds, tiny_config(4));
  testing::TempDir dir("artifacts");
  save_artifacts(dir.path().string(), art, ds);
  const auto loaded = load_artifacts(dir.path().string());
  EXPECT_EQ(to_json(loaded.config), to_json(art.config));
  EXPECT_EQ(loaded.in_sample_keys.size(), ds.in_sample.size());
  EXPECT_EQ(loaded.out_of_sample_keys.size(), ds.out_of_sample.size());
  const auto table = load_artifact_embeddings(dir.path().string(), art.graph);
  EXPECT_EQ(table, art.embeddings);

  Predictor a(art.config, art.model, art.graph, art.embeddings);
  Predictor b(loaded.config, loaded.model, art.graph, table);
  for (NodeId v : art.graph.nodes_of_type(NodeType::App))
    EXPECT_EQ(a.predict(v).prediction.probabilities, b.predict(v).prediction.probabilities);
}

TEST(Arrival, AttachScoreAndDetach) {
  const auto ds = synth_hin(tiny_synth(5));
  const auto art = fit(ds, tiny_config(5));
  ArrivalPredictor arrival(art);
  std::ostringstream before;
  write_edge_list(before, arrival.base());
  for (NodeId v : ds.out_of_sample) {
    // Reference: the embedding graph plus exactly this one app.
    Hin one = ds.hin.induced_subgraph([&](NodeId u) {
      return u == v || !std::binary_search(ds.out_of_sample.begin(), ds.out_of_sample.end(), u);
    });
    const Predictor reference = Predictor::from_artifacts(art, one);
    const NodeId w = *one.find(NodeType::App, ds.hin.key(v));
    EXPECT_EQ(arrival.represent(ds.hin, v), reference.represent(w));
    EXPECT_EQ(arrival.predict(ds.hin, v).prediction.probabilities,
              reference.predict(w).prediction.probabilities);
  }
  std::ostringstream after;
  write_edge_list(after, arrival.base());
  EXPECT_EQ(before.str(), after.str());
  EXPECT_EQ(arrival.base().node_count(), art.graph.node_count());
}

// ---------------------------------------------------------------- default-size fit

class DefaultFit : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    ds_ = std::make_unique<LabeledDataset>(synth_hin(SynthConfig{}));
    PipelineConfig cfg;
    cfg.set_seed(1);
    art_ = std::make_unique<PipelineArtifacts>(fit(*ds_, cfg));
  }
  static void TearDownTestSuite() {
    art_.reset();
    ds_.reset();
  }
  static std::unique_ptr<LabeledDataset> ds_;
  static std::unique_ptr<PipelineArtifacts> art_;
};

std::unique_ptr<LabeledDataset> DefaultFit::ds_;
std::unique_ptr<PipelineArtifacts> DefaultFit::art_;

TEST_F(DefaultFit, InSampleRowZeroIsOwnEmbedding) {
  for (NodeId v : art_->graph.nodes_of_type(NodeType::App)) {
    const auto m = represent(art_->graph, art_->embeddings, v, art_->config);
    const auto own = art_->embeddings.at(v);
    ASSERT_TRUE(std::equal(own.begin(), own.end(), m.row(0).begin()));
  }
}

// Logistic regression on the row means of the matrices: a cheap check that
// the planted classes are separable before holding the DNN to it.
double row_mean_logreg_accuracy(const std::vector<ReprMatrix>& xs, const std::vector<Label>& ys) {
  const std::size_t d = xs.front().cols;
  std::vector<std::vector<double>> f;
  for (const auto& m : xs) {
    std::vector<double> r(d, 0.0);
    for (std::size_t i = 0; i < m.rows; ++i)
      for (std::size_t j = 0; j < d; ++j) r[j] += m.row(i)[j] / m.rows;
    f.push_back(r);
  }
  std::vector<double> mu(d, 0.0), sd(d, 0.0);
  for (const auto& r : f)
    for (std::size_t j = 0; j < d; ++j) mu[j] += r[j] / f.size();
  for (const auto& r : f)
    for (std::size_t j = 0; j < d; ++j) sd[j] += (r[j] - mu[j]) * (r[j] - mu[j]) / f.size();
  for (auto& r : f)
    for (std::size_t j = 0; j < d; ++j) r[j] = (r[j] - mu[j]) / std::sqrt(sd[j] + 1e-12);
  std::vector<double> w(d, 0.0);
  double b = 0.0;
  for (int it = 0; it < 500; ++it) {
    std::vector<double> gw(d, 0.0);
    double gb = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) {
      double z = b;
      for (std::size_t j = 0; j < d; ++j) z += w[j] * f[i][j];
      const double err = 1.0 / (1.0 + std::exp(-z)) - (ys[i] == Label::Malicious ? 1.0 : 0.0);
      for (std::size_t j = 0; j < d; ++j) gw[j] += err * f[i][j] / f.size();
      gb += err / f.size();
    }
    for (std::size_t j = 0; j < d; ++j) w[j] -= 0.5 * gw[j];
    b -= 0.5 * gb;
  }
  std::size_t ok = 0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    double z = b;
    for (std::size_t j = 0; j < d; ++j) z += w[j] * f[i][j];
    ok += (z > 0) == (ys[i] == Label::Malicious);
  }
  return static_cast<double>(ok) / f.size();
}

TEST_F(DefaultFit, InSampleTrainingAccuracy) {
  std::vector<ReprMatrix> xs;
  std::vector<Label> ys;
  for (NodeId v : art_->graph.nodes_of_type(NodeType::App)) {
    xs.push_back(represent(art_->graph, art_->embeddings, v, art_->config));
    ys.push_back(ds_->labels.at(*ds_->hin.find(NodeType::App, art_->graph.key(v))));
  }
  ASSERT_GE(row_mean_logreg_accuracy(xs, ys), 0.95) << "planted structure is not separable";
  const auto preds = art_->model.predict(xs);
  std::size_t ok = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) ok += preds[i].label == ys[i];
  EXPECT_GE(static_cast<double>(ok) / xs.size(), 0.95);
}

TEST_F(DefaultFit, InSamplePredictionEqualsTrainingMatrixOutput) {
  const Predictor p = Predictor::from_artifacts(*art_, art_->graph);
  ArrivalPredictor arrival(*art_);
  for (NodeId v : std::vector<NodeId>(ds_->in_sample.begin(), ds_->in_sample.begin() + 20)) {
    const NodeId g = *art_->graph.find(NodeType::App, ds_->hin.key(v));
    const auto expected = art_->model.predict(represent(art_->graph, art_->embeddings, g, art_->config));
    EXPECT_EQ(arrival.predict(ds_->hin, v).prediction.probabilities, expected.probabilities);
    EXPECT_EQ(p.predict(g).prediction.probabilities, expected.probabilities);
  }
}

TEST_F(DefaultFit, IsolatedNewAppGetsTheZeroMatrixOutput) {
  Hin g = ds_->hin;
  const NodeId lonely = g.add_node(NodeType::App, "lonely-newcomer");
  ArrivalPredictor arrival(*art_);
  const auto p = arrival.predict(g, lonely);
  EXPECT_TRUE(p.low_evidence);
  const ReprMatrix zero(art_->config.budget.total_rows(), art_->config.skipgram.dimension);
  EXPECT_EQ(p.prediction.probabilities, art_->model.predict(zero).probabilities);
}

TEST_F(DefaultFit, NewAppsTiedToMaliciousEntitiesAreFlagged) {
  // The malicious class owns the upper half of each entity pool.
  const SynthConfig sc;
  Hin g = ds_->hin;
  Rng rng(99);
  std::vector<NodeId> arrivals;
  for (int i = 0; i < 100; ++i) {
    const NodeId a = g.add_node(NodeType::App, "planted" + std::to_string(i));
    auto link = [&](NodeType type, const std::string& prefix, std::uint32_t n, int k) {
      for (int j = 0; j < k; ++j) {
        const auto idx = n / 2 + uniform_index(rng, n - n / 2);
        g.add_edge(a, *g.find(type, prefix + std::to_string(idx)));
      }
    };
    link(NodeType::Api, "api", sc.n_api, 8);
    link(NodeType::Imei, "imei", sc.n_imei, 3);
    link(NodeType::Sig, "sig", sc.n_sig, 1);
    link(NodeType::Aff, "aff", sc.n_aff, 1);
    arrivals.push_back(a);
  }
  ArrivalPredictor arrival(*art_);
  std::size_t flagged = 0;
  for (NodeId a : arrivals) flagged += arrival.predict(g, a).prediction.label == Label::Malicious;
  EXPECT_GE(flagged, 95u);
}

}  // namespace
}  // namespace aidroid
