#include "aidroid/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <set>

#include "aidroid/error.hpp"
#include "aidroid/random.hpp"

namespace aidroid {

namespace fs = std::filesystem;

std::string to_string(ReprMode m) { return m == ReprMode::Hin2Img ? "hin2img" : "localavg"; }

ReprMode parse_repr_mode(const std::string& s) {
  if (s == "hin2img") return ReprMode::Hin2Img;
  if (s == "localavg") return ReprMode::LocalAvg;
  throw InputError("unknown representation mode '" + s + "' (expected hin2img or localavg)");
}

void PipelineConfig::sync_shapes() {
  dnn.input_rows = budget.total_rows();
  dnn.input_cols = skipgram.dimension;
}

void PipelineConfig::validate() const {
  if (groups.empty()) throw InputError("at least one meta-path group is required");
  walk.validate();
  skipgram.validate();
  budget.validate();
  dnn.validate();
  if (!(own_row_dropout >= 0.0 && own_row_dropout < 1.0)) throw InputError("own-row dropout must lie in [0, 1)");
  if (dnn.input_cols != skipgram.dimension) {
    throw InputError("DNN input width " + std::to_string(dnn.input_cols) + " differs from embedding dimension " +
                     std::to_string(skipgram.dimension));
  }
  if (dnn.input_rows != budget.total_rows()) {
    throw InputError("DNN input height " + std::to_string(dnn.input_rows) + " differs from neighbor budget t=" +
                     std::to_string(budget.total_rows()));
  }
}

void PipelineConfig::set_seed(std::uint64_t seed) {
  walk.seed = derive_seed(seed, {1});
  skipgram.seed = derive_seed(seed, {2});
  dnn.seed = derive_seed(seed, {3});
}

nlohmann::json to_json(const PipelineConfig& cfg) {
  nlohmann::json groups = nlohmann::json::array();
  for (const auto& g : cfg.groups) {
    nlohmann::json paths = nlohmann::json::array();
    for (const auto& p : g.paths()) paths.push_back(p.to_string());
    groups.push_back(paths);
  }
  nlohmann::json dnn;
  to_json(dnn, cfg.dnn);
  return {{"meta_path_groups", groups},
          {"walk",
           {{"walks_per_node", cfg.walk.walks_per_node},
            {"walk_length", cfg.walk.walk_length},
            {"seed", cfg.walk.seed},
            {"threads", cfg.walk.threads}}},
          {"skipgram",
           {{"dimension", cfg.skipgram.dimension},
            {"window", cfg.skipgram.window},
            {"epochs", cfg.skipgram.epochs},
            {"initial_lr", cfg.skipgram.initial_lr},
            {"min_lr", cfg.skipgram.min_lr},
            {"seed", cfg.skipgram.seed},
            {"threads", cfg.skipgram.threads}}},
          {"budget", {{"rows_per_order", cfg.budget.rows_per_order}}},
          {"dnn", dnn},
          {"mode", to_string(cfg.mode)},
          {"own_row_dropout", cfg.own_row_dropout}};
}

PipelineConfig pipeline_config_from_json(const nlohmann::json& j) {
  try {
    PipelineConfig cfg;
    cfg.groups.clear();
    for (const auto& g : j.at("meta_path_groups")) {
      std::vector<MetaPath> paths;
      for (const auto& p : g) paths.push_back(parse_meta_path(p.get<std::string>()));
      cfg.groups.emplace_back(std::move(paths));
    }
    const auto& w = j.at("walk");
    cfg.walk.walks_per_node = w.at("walks_per_node");
    cfg.walk.walk_length = w.at("walk_length");
    cfg.walk.seed = w.at("seed");
    cfg.walk.threads = w.at("threads");
    const auto& s = j.at("skipgram");
    cfg.skipgram.dimension = s.at("dimension");
    cfg.skipgram.window = s.at("window");
    cfg.skipgram.epochs = s.at("epochs");
    cfg.skipgram.initial_lr = s.at("initial_lr");
    cfg.skipgram.min_lr = s.at("min_lr");
    cfg.skipgram.seed = s.at("seed");
    cfg.skipgram.threads = s.at("threads");
    cfg.budget = NeighborBudget(j.at("budget").at("rows_per_order").get<std::vector<std::uint32_t>>());
    cfg.dnn = j.at("dnn").get<DnnConfig>();
    cfg.mode = parse_repr_mode(j.at("mode").get<std::string>());
    cfg.own_row_dropout = j.at("own_row_dropout");
    cfg.validate();
    return cfg;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("bad pipeline config: ") + e.what());
  }
}

Hin training_graph(const LabeledDataset& ds) {
  std::vector<bool> held_out(ds.hin.node_count(), false);
  for (NodeId v : ds.out_of_sample) held_out[v] = true;
  return ds.hin.induced_subgraph([&](NodeId v) { return !held_out[v]; });
}

WalkCorpus sample_corpus(const Hin& graph, const PipelineConfig& cfg) {
  const auto apps = graph.nodes_of_type(NodeType::App);
  WalkCorpus corpus;
  for (std::size_t g = 0; g < cfg.groups.size(); ++g) {
    WalkConfig wc = cfg.walk;
    wc.seed = derive_seed(cfg.walk.seed, {g});
    corpus.append(build_corpus(graph, wc, cfg.groups[g], apps));
  }
  return corpus;
}

EmbeddingTable learn_embeddings(const Hin& graph, const PipelineConfig& cfg) {
  const WalkCorpus corpus = sample_corpus(graph, cfg);
  if (corpus.token_count() == 0) throw EmptyInputError("walk corpus is empty");
  return train_embeddings(corpus, cfg.skipgram, graph.node_count());
}

ReprMatrix represent(const Hin& hin, const EmbeddingTable& table, NodeId app, const PipelineConfig& cfg) {
  if (cfg.mode == ReprMode::Hin2Img) return build_repr_matrix(hin, table, app, cfg.budget);
  const auto own = table.find(app);
  if (!own.empty()) return single_row_matrix(own, cfg.budget.total_rows());
  return single_row_matrix(local_avg(hin, table, app), cfg.budget.total_rows());
}

namespace {

void require_two_classes(const LabeledDataset& ds) {
  bool seen[2] = {false, false};
  for (NodeId v : ds.in_sample) seen[static_cast<int>(ds.labels.at(v))] = true;
  if (!seen[0] || !seen[1]) throw InputError("training set must contain both benign and malicious apps");
}

}  // namespace

PipelineArtifacts fit(const LabeledDataset& ds, const PipelineConfig& cfg_in) {
  PipelineConfig cfg = cfg_in;
  cfg.sync_shapes();
  cfg.validate();
  ds.validate();
  require_two_classes(ds);
  Hin graph = training_graph(ds);
  EmbeddingTable table = learn_embeddings(graph, cfg);
  return fit_classifier(ds, std::move(graph), std::move(table), cfg);
}

PipelineArtifacts fit_classifier(const LabeledDataset& ds, Hin graph, EmbeddingTable embeddings,
                                 const PipelineConfig& cfg_in) {
  PipelineConfig cfg = cfg_in;
  cfg.sync_shapes();
  cfg.validate();
  require_two_classes(ds);
  if (embeddings.dim() != cfg.skipgram.dimension) throw InputError("embedding dimension differs from config");

  // Samples follow the embedding graph's canonical node order, so the
  // result does not depend on how the input graph numbered its nodes.
  std::vector<ReprMatrix> xs;
  std::vector<Label> ys;
  for (NodeId v : graph.nodes_of_type(NodeType::App)) {
    const auto original = ds.hin.find(NodeType::App, graph.key(v));
    if (!original) throw ReferenceError("app '" + graph.key(v) + "' missing from dataset");
    xs.push_back(represent(graph, embeddings, v, cfg));
    ys.push_back(ds.labels.at(*original));
  }
  cfg.dnn.first_row_dropout = cfg.mode == ReprMode::Hin2Img ? cfg.own_row_dropout : 0.0;
  DnnModel model(cfg.dnn);
  TrainReport report = train(model, xs, ys);
  return PipelineArtifacts{std::move(cfg), std::move(graph), std::move(embeddings), std::move(model),
                           std::move(report)};
}

// ---------------------------------------------------------------- Predictor

Predictor::Predictor(const PipelineConfig& cfg, const DnnModel& model, const Hin& graph, EmbeddingTable table)
    : cfg_(&cfg), model_(&model), graph_(&graph), table_(std::move(table)) {
  if (table_.node_capacity() != graph.node_count()) throw InputError("embedding table is bound to another graph");
  if (table_.dim() != cfg.skipgram.dimension) throw InputError("embedding dimension differs from config");
}

Predictor Predictor::from_artifacts(const PipelineArtifacts& artifacts, const Hin& graph) {
  return Predictor(artifacts.config, artifacts.model, graph, artifacts.embeddings.rebind(artifacts.graph, graph));
}

ReprMatrix Predictor::represent(NodeId app) const {
  if (graph_->type(app) != NodeType::App) throw InputError("'" + graph_->label(app) + "' is not an app");
  return aidroid::represent(*graph_, table_, app, *cfg_);
}

namespace {

bool all_zero(const ReprMatrix& m) {
  return std::all_of(m.values.begin(), m.values.end(), [](double x) { return x == 0.0; });
}

}  // namespace

AppPrediction Predictor::predict(NodeId app) const {
  const ReprMatrix x = represent(app);
  return {app, model_->predict(x), all_zero(x)};
}

std::vector<AppPrediction> Predictor::predict(std::span<const NodeId> apps, std::size_t batch_size) const {
  std::vector<AppPrediction> out;
  out.reserve(apps.size());
  batch_size = std::max<std::size_t>(batch_size, 1);
  for (std::size_t begin = 0; begin < apps.size(); begin += batch_size) {
    const std::size_t end = std::min(apps.size(), begin + batch_size);
    std::vector<ReprMatrix> xs;
    for (std::size_t i = begin; i < end; ++i) xs.push_back(represent(apps[i]));
    const auto preds = model_->predict(xs);
    for (std::size_t i = begin; i < end; ++i) out.push_back({apps[i], preds[i - begin], all_zero(xs[i - begin])});
  }
  return out;
}

ArrivalPredictor::ArrivalPredictor(const PipelineConfig& cfg, const DnnModel& model, Hin base, EmbeddingTable table)
    : cfg_(&cfg), model_(&model), base_(std::move(base)), table_(std::move(table)) {
  if (table_.node_capacity() != base_.node_count()) throw InputError("embedding table is bound to another graph");
  if (table_.dim() != cfg.skipgram.dimension) throw InputError("embedding dimension differs from config");
}

ArrivalPredictor::ArrivalPredictor(const PipelineArtifacts& artifacts)
    : ArrivalPredictor(artifacts.config, artifacts.model, artifacts.graph, artifacts.embeddings) {}

template <typename Fn>
auto ArrivalPredictor::with_attached(const Hin& source, NodeId app, Fn&& fn) {
  if (source.type(app) != NodeType::App) throw InputError("'" + source.label(app) + "' is not an app");
  if (const auto known = base_.find(NodeType::App, source.key(app))) return fn(*known);

  const std::size_t before = base_.node_count();
  struct Detach {
    Hin& g;
    std::size_t n;
    ~Detach() {
      while (g.node_count() > n) g.remove_last_node();
    }
  } detach{base_, before};
  const NodeId v = base_.add_node(NodeType::App, source.key(app));
  for (NodeType t : kAllNodeTypes) {
    for (NodeId u : source.neighbors_of_type(app, t)) base_.add_edge(v, base_.get_or_add(t, source.key(u)));
  }
  return fn(v);
}

ReprMatrix ArrivalPredictor::represent(const Hin& source, NodeId app) {
  return with_attached(source, app, [&](NodeId v) { return aidroid::represent(base_, table_, v, *cfg_); });
}

AppPrediction ArrivalPredictor::predict(const Hin& source, NodeId app) {
  const ReprMatrix x = represent(source, app);
  return {app, model_->predict(x), all_zero(x)};
}

std::vector<AppPrediction> ArrivalPredictor::predict(const Hin& source, std::span<const NodeId> apps) {
  std::vector<AppPrediction> out;
  out.reserve(apps.size());
  for (NodeId v : apps) out.push_back(predict(source, v));
  return out;
}

// ---------------------------------------------------------------- metrics

Metrics metrics_from_confusion(std::size_t tp, std::size_t tn, std::size_t fp, std::size_t fn) {
  Metrics m;
  m.tp = tp;
  m.tn = tn;
  m.fp = fp;
  m.fn = fn;
  const double total = static_cast<double>(tp + tn + fp + fn);
  m.accuracy = total > 0 ? static_cast<double>(tp + tn) / total : 0.0;
  m.precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  m.recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  m.f1 = m.precision + m.recall > 0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  return m;
}

std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const Label> truth) {
  if (scores.size() != truth.size()) throw InputError("score and truth counts differ");
  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::size_t positives = 0;
  for (Label l : truth) positives += l == Label::Malicious;
  const std::size_t negatives = truth.size() - positives;
  auto rate = [](std::size_t hits, std::size_t total, bool everything_positive) {
    if (total == 0) return everything_positive ? 1.0 : 0.0;
    return static_cast<double>(hits) / static_cast<double>(total);
  };

  std::vector<RocPoint> roc{{std::numeric_limits<double>::infinity(), 0.0, 0.0}};
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double threshold = scores[order[i]];
    while (i < order.size() && scores[order[i]] == threshold) {
      if (truth[order[i]] == Label::Malicious) {
        ++tp;
      } else {
        ++fp;
      }
      ++i;
    }
    const bool everything = i == order.size();
    roc.push_back({threshold, rate(fp, negatives, everything), rate(tp, positives, everything)});
  }
  if (roc.back().fpr != 1.0 || roc.back().tpr != 1.0) roc.push_back({-std::numeric_limits<double>::infinity(), 1.0, 1.0});
  return roc;
}

Metrics evaluate(std::span<const double> scores, std::span<const Label> predicted, std::span<const Label> truth) {
  if (predicted.size() != truth.size() || scores.size() != truth.size()) {
    throw InputError("prediction count " + std::to_string(predicted.size()) + " differs from truth count " +
                     std::to_string(truth.size()));
  }
  if (truth.empty()) throw EmptyInputError("nothing to evaluate");
  std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool pos = predicted[i] == Label::Malicious;
    const bool actual = truth[i] == Label::Malicious;
    tp += pos && actual;
    tn += !pos && !actual;
    fp += pos && !actual;
    fn += !pos && actual;
  }
  Metrics m = metrics_from_confusion(tp, tn, fp, fn);
  m.roc = roc_curve(scores, truth);
  return m;
}

Metrics evaluate(std::span<const Prediction> predictions, std::span<const Label> truth) {
  std::vector<double> scores;
  std::vector<Label> labels;
  for (const auto& p : predictions) {
    scores.push_back(p.score());
    labels.push_back(p.label);
  }
  return evaluate(scores, labels, truth);
}

nlohmann::json to_json(const Metrics& m) {
  return {{"tp", m.tp},           {"tn", m.tn},         {"fp", m.fp},     {"fn", m.fn},
          {"accuracy", m.accuracy}, {"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}};
}

void write_roc_csv(std::ostream& out, const std::vector<RocPoint>& roc) {
  out << "threshold,fpr,tpr\n";
  for (const auto& p : roc) {
    out << format_double(p.threshold) << ',' << format_double(p.fpr) << ',' << format_double(p.tpr) << '\n';
  }
}

// ---------------------------------------------------------------- artifacts

void save_artifacts(const std::string& dir, const PipelineArtifacts& artifacts, const LabeledDataset& ds) {
  fs::create_directories(dir);
  save_embeddings((fs::path(dir) / "embeddings.txt").string(), artifacts.graph, artifacts.embeddings);
  artifacts.model.save((fs::path(dir) / "model.bin").string());
  {
    std::ofstream out(fs::path(dir) / "config.json");
    out << to_json(artifacts.config).dump(2) << '\n';
    if (!out) throw InputError("cannot write config.json");
  }
  std::ofstream out(fs::path(dir) / "split.tsv");
  for (NodeId v : ds.in_sample) out << ds.hin.key(v) << "\tin\n";
  for (NodeId v : ds.out_of_sample) out << ds.hin.key(v) << "\tout\n";
  if (!out) throw InputError("cannot write split.tsv");
}

LoadedArtifacts load_artifacts(const std::string& dir) {
  const fs::path config_path = fs::path(dir) / "config.json";
  std::ifstream cfg_in(config_path);
  if (!cfg_in) throw InputError("cannot open " + config_path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(cfg_in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(config_path.string(), 0, e.what());
  }
  LoadedArtifacts out{pipeline_config_from_json(j), DnnModel::load((fs::path(dir) / "model.bin").string()), {}, {}};
  if (nlohmann::json(out.model.config()) != nlohmann::json(out.config.dnn)) {
    throw InputError("model.bin does not match config.json");
  }
  std::ifstream split(fs::path(dir) / "split.tsv");
  std::string line;
  std::size_t lineno = 0;
  while (split && std::getline(split, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    const std::string tag = tab == std::string::npos ? "" : line.substr(tab + 1);
    if (tag == "in") {
      out.in_sample_keys.push_back(line.substr(0, tab));
    } else if (tag == "out") {
      out.out_of_sample_keys.push_back(line.substr(0, tab));
    } else {
      throw ParseError("split.tsv", lineno, "expected app_key<TAB>in|out");
    }
  }
  return out;
}

EmbeddingTable load_artifact_embeddings(const std::string& dir, const Hin& graph) {
  return load_embeddings((fs::path(dir) / "embeddings.txt").string(), graph);
}

// ---------------------------------------------------------------- latency bench

SynthConfig scaled_synth_config(const SynthConfig& base, std::size_t nodes) {
  const double total = 2.0 * base.n_apps_per_class + base.n_api + base.n_imei + base.n_sig + base.n_aff;
  const double f = static_cast<double>(nodes) / total;
  auto scale = [&](std::uint32_t n) { return std::max<std::uint32_t>(1, static_cast<std::uint32_t>(std::lround(n * f))); };
  SynthConfig c = base;
  c.n_apps_per_class = scale(base.n_apps_per_class);
  c.n_api = scale(base.n_api);
  c.n_imei = scale(base.n_imei);
  c.n_sig = scale(base.n_sig);
  c.n_aff = scale(base.n_aff);
  return c;
}

std::vector<OosBenchRow> bench_oos(const OosBenchConfig& cfg_in) {
  OosBenchConfig cfg = cfg_in;
  cfg.pipeline.sync_shapes();
  cfg.pipeline.validate();
  if (cfg.probes == 0 || cfg.repeats == 0) throw InputError("bench needs at least one probe and one repeat");
  // Latency does not depend on the weights, so one untrained model serves all sizes.
  const DnnModel model(cfg.pipeline.dnn);
  std::vector<OosBenchRow> rows;
  for (std::size_t n : cfg.node_counts) {
    SynthConfig sc = scaled_synth_config(SynthConfig{}, n);
    sc.seed = derive_seed(cfg.seed, {n});
    const LabeledDataset ds = synth_hin(sc);
    const Hin graph = training_graph(ds);
    const EmbeddingTable table = learn_embeddings(graph, cfg.pipeline);
    const Predictor predictor(cfg.pipeline, model, ds.hin, table.rebind(graph, ds.hin));

    std::vector<NodeId> probes = ds.out_of_sample;
    Rng rng(derive_seed(cfg.seed, {n, 0x9b}));
    shuffle(probes.begin(), probes.end(), rng);
    probes.resize(std::min(probes.size(), cfg.probes));
    if (probes.empty()) throw EmptyInputError("no out-of-sample apps to time");
    predictor.predict(probes.front());  // warm-up

    std::vector<double> ms;
    for (NodeId v : probes) {
      double best = std::numeric_limits<double>::infinity();
      for (std::uint32_t r = 0; r < cfg.repeats; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        const auto p = predictor.predict(v);
        const auto t1 = std::chrono::steady_clock::now();
        if (!std::isfinite(p.prediction.score())) throw Error("non-finite score");
        best = std::min(best, std::chrono::duration<double, std::milli>(t1 - t0).count());
      }
      ms.push_back(best);
    }
    std::sort(ms.begin(), ms.end());
    rows.push_back({ds.hin.node_count(), ds.hin.edge_count(), ms[ms.size() / 2], ms[(ms.size() * 9) / 10]});
  }
  return rows;
}

}  // namespace aidroid
