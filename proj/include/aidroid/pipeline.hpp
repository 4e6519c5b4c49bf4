#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "aidroid/dataset.hpp"
#include "aidroid/dnn.hpp"
#include "aidroid/embedding_table.hpp"
#include "aidroid/hin.hpp"
#include "aidroid/hin2img.hpp"
#include "aidroid/hine.hpp"
#include "aidroid/walker.hpp"

namespace aidroid {

// How an app becomes a t x d matrix for the classifier.
//   Hin2Img:  own embedding plus k-order neighbor blocks.
//   LocalAvg: row 0 only. In-sample apps use their own embedding; apps
//             without one use the mean of their neighbors' embeddings.
enum class ReprMode { Hin2Img, LocalAvg };

std::string to_string(ReprMode m);
ReprMode parse_repr_mode(const std::string& s);

struct PipelineConfig {
  std::vector<MetaPathSet> groups = default_meta_path_groups();
  WalkConfig walk;
  SkipGramConfig skipgram;
  NeighborBudget budget;
  DnnConfig dnn;
  ReprMode mode = ReprMode::Hin2Img;
  // An arriving app has no embedding of its own, so its row 0 is zero. In
  // hin2img mode the classifier is trained with row 0 zeroed at this rate so
  // it also learns from the neighbor rows. LocalAvg ignores it.
  double own_row_dropout = 0.5;

  // Copies d into the DNN input width and t into its height.
  void sync_shapes();
  void validate() const;
  // Sets the walk, skip-gram and DNN seeds from one master seed.
  void set_seed(std::uint64_t seed);
};

nlohmann::json to_json(const PipelineConfig& cfg);
PipelineConfig pipeline_config_from_json(const nlohmann::json& j);

// The graph used for embedding: the input HIN without out-of-sample apps.
Hin training_graph(const LabeledDataset& ds);

// One corpus per meta-path group, walks starting at every APP node.
WalkCorpus sample_corpus(const Hin& graph, const PipelineConfig& cfg);
EmbeddingTable learn_embeddings(const Hin& graph, const PipelineConfig& cfg);

ReprMatrix represent(const Hin& hin, const EmbeddingTable& table, NodeId app, const PipelineConfig& cfg);

struct PipelineArtifacts {
  PipelineConfig config;
  Hin graph;  // embedding graph (in-sample apps only)
  EmbeddingTable embeddings;
  DnnModel model;
  TrainReport report;
};

// Algorithm stages 1-4: embed the in-sample graph, build matrices for the
// in-sample apps, train the classifier. Refuses a single-class training set.
PipelineArtifacts fit(const LabeledDataset& ds, const PipelineConfig& cfg);

// Classifier stage only, reusing an embedding learned on training_graph(ds).
PipelineArtifacts fit_classifier(const LabeledDataset& ds, Hin graph, EmbeddingTable embeddings,
                                 const PipelineConfig& cfg);

struct AppPrediction {
  NodeId app = 0;
  Prediction prediction;
  bool low_evidence = false;  // representation was the all-zero matrix
};

// Scores apps of a graph that may contain nodes unseen during training.
// Embeddings are looked up by key once at construction; each prediction
// then costs one matrix build plus one forward pass.
class Predictor {
 public:
  Predictor(const PipelineConfig& cfg, const DnnModel& model, const Hin& graph, EmbeddingTable table);
  static Predictor from_artifacts(const PipelineArtifacts& artifacts, const Hin& graph);

  const Hin& graph() const { return *graph_; }
  const EmbeddingTable& embeddings() const { return table_; }

  ReprMatrix represent(NodeId app) const;
  AppPrediction predict(NodeId app) const;
  std::vector<AppPrediction> predict(std::span<const NodeId> apps, std::size_t batch_size = 64) const;

 private:
  const PipelineConfig* cfg_;
  const DnnModel* model_;
  const Hin* graph_;
  EmbeddingTable table_;
};

// Scores apps the way they arrive in deployment: one at a time. Each app is
// attached with its own edges to a private copy of the embedding graph,
// scored, and detached again, so earlier arrivals never change a later
// app's representation. Apps already in the embedding graph are scored in
// place. Not thread-safe; use one instance per thread.
class ArrivalPredictor {
 public:
  ArrivalPredictor(const PipelineConfig& cfg, const DnnModel& model, Hin base, EmbeddingTable table);
  explicit ArrivalPredictor(const PipelineArtifacts& artifacts);

  const Hin& base() const { return base_; }

  ReprMatrix represent(const Hin& source, NodeId app);
  AppPrediction predict(const Hin& source, NodeId app);
  std::vector<AppPrediction> predict(const Hin& source, std::span<const NodeId> apps);

 private:
  template <typename Fn>
  auto with_attached(const Hin& source, NodeId app, Fn&& fn);

  const PipelineConfig* cfg_;
  const DnnModel* model_;
  Hin base_;
  EmbeddingTable table_;
};

struct RocPoint {
  double threshold = 0.0;  // positive when score >= threshold
  double fpr = 0.0;
  double tpr = 0.0;
};

struct Metrics {
  std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
  double accuracy = 0.0;
  double precision = 0.0;  // 0 when nothing is predicted positive
  double recall = 0.0;     // 0 when there are no positives
  double f1 = 0.0;         // 0 when precision + recall is 0
  std::vector<RocPoint> roc;
};

Metrics metrics_from_confusion(std::size_t tp, std::size_t tn, std::size_t fp, std::size_t fn);
// Malicious is the positive class. Scores are P(malicious).
Metrics evaluate(std::span<const double> scores, std::span<const Label> predicted, std::span<const Label> truth);
Metrics evaluate(std::span<const Prediction> predictions, std::span<const Label> truth);
std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const Label> truth);

nlohmann::json to_json(const Metrics& m);
void write_roc_csv(std::ostream& out, const std::vector<RocPoint>& roc);

// Artifacts directory: embeddings.txt, model.bin, config.json, split.tsv.
void save_artifacts(const std::string& dir, const PipelineArtifacts& artifacts, const LabeledDataset& ds);

struct LoadedArtifacts {
  PipelineConfig config;
  DnnModel model;
  std::vector<std::string> in_sample_keys;
  std::vector<std::string> out_of_sample_keys;
};

LoadedArtifacts load_artifacts(const std::string& dir);
// Embeddings of an artifacts directory resolved against `graph` by key.
EmbeddingTable load_artifact_embeddings(const std::string& dir, const Hin& graph);

// Out-of-sample latency scaling: per-node predict time on synthetic graphs of
// increasing size with the same degree distribution and budget.
struct OosBenchConfig {
  std::vector<std::size_t> node_counts{1000, 10000};
  std::size_t probes = 200;  // timed predictions per graph
  std::uint32_t repeats = 5; // each probe is timed this many times; the minimum is kept
  PipelineConfig pipeline;
  std::uint64_t seed = 1;
};

struct OosBenchRow {
  std::size_t nodes = 0;
  std::size_t edges = 0;
  double median_ms = 0.0;
  double p90_ms = 0.0;
};

std::vector<OosBenchRow> bench_oos(const OosBenchConfig& cfg);

// Synthetic config whose pools are scaled so the graph has about `nodes`
// nodes while expected degrees stay fixed.
SynthConfig scaled_synth_config(const SynthConfig& base, std::size_t nodes);

}  // namespace aidroid
