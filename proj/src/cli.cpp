#include "aidroid/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "aidroid/error.hpp"
#include "aidroid/pipeline.hpp"

namespace aidroid {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<std::uint32_t> parse_budget(const std::string& text) {
  std::vector<std::uint32_t> rows;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const long v = std::stol(item, &used);
      if (used != item.size() || v < 0) throw std::invalid_argument(item);
      rows.push_back(static_cast<std::uint32_t>(v));
    } catch (const std::exception&) {
      throw InputError("bad --budget entry '" + item + "' (expected comma-separated row counts, e.g. 21,42)");
    }
  }
  return rows;
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  return out;
}

void log_config(std::ostream& err, const std::string& command, const json& config) {
  err << json{{"command", command}, {"config", config}}.dump() << '\n';
}

json walk_json(const WalkConfig& w) {
  return {{"walks_per_node", w.walks_per_node}, {"walk_length", w.walk_length}, {"seed", w.seed},
          {"threads", w.threads}};
}

json skipgram_json(const SkipGramConfig& s) {
  return {{"dimension", s.dimension}, {"window", s.window},   {"epochs", s.epochs}, {"initial_lr", s.initial_lr},
          {"min_lr", s.min_lr},       {"seed", s.seed},       {"threads", s.threads}};
}

json synth_json(const SynthConfig& c) {
  return {{"apps_per_class", c.n_apps_per_class}, {"n_api", c.n_api},
          {"n_imei", c.n_imei},                   {"n_sig", c.n_sig},
          {"n_aff", c.n_aff},                     {"p_intra", c.p_intra},
          {"p_inter", c.p_inter},                 {"mean_degree_api", c.mean_degree_api},
          {"mean_degree_imei", c.mean_degree_imei}, {"mean_degree_sig", c.mean_degree_sig},
          {"mean_degree_aff", c.mean_degree_aff}, {"holdout", c.holdout_fraction},
          {"seed", c.seed}};
}

void write_split(std::ostream& out, const LabeledDataset& ds) {
  for (NodeId v : ds.in_sample) out << ds.hin.key(v) << "\tin\n";
  for (NodeId v : ds.out_of_sample) out << ds.hin.key(v) << "\tout\n";
}

// Applies a split.tsv (app_key<TAB>in|out) to a dataset.
void read_split(const std::string& path, LabeledDataset& ds) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  ds.in_sample.clear();
  ds.out_of_sample.clear();
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line.front() == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw ParseError(path, lineno, "expected app_key<TAB>in|out");
    const auto id = ds.hin.find(NodeType::App, line.substr(0, tab));
    if (!id) throw ReferenceError(path + ":" + std::to_string(lineno) + ": unknown app '" + line.substr(0, tab) + "'");
    const std::string tag = line.substr(tab + 1);
    if (tag == "in") {
      ds.in_sample.push_back(*id);
    } else if (tag == "out") {
      ds.out_of_sample.push_back(*id);
    } else {
      throw ParseError(path, lineno, "split tag must be 'in' or 'out'");
    }
  }
  std::sort(ds.in_sample.begin(), ds.in_sample.end());
  std::sort(ds.out_of_sample.begin(), ds.out_of_sample.end());
  ds.validate();
}

std::vector<std::string> read_key_list(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  std::vector<std::string> keys;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty() && line.front() != '#') keys.push_back(line);
  }
  return keys;
}

struct CsvPrediction {
  std::string key;
  double score;
  Label label;
};

std::vector<CsvPrediction> read_predictions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  std::vector<CsvPrediction> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || (lineno == 1 && line == "app_key,score,label")) continue;
    const auto a = line.find(',');
    const auto b = a == std::string::npos ? a : line.find(',', a + 1);
    if (b == std::string::npos) throw ParseError(path, lineno, "expected app_key,score,label");
    CsvPrediction p;
    p.key = line.substr(0, a);
    try {
      p.score = std::stod(line.substr(a + 1, b - a - 1));
    } catch (const std::exception&) {
      throw ParseError(path, lineno, "bad score");
    }
    const std::string label = line.substr(b + 1);
    if (label != "0" && label != "1") throw ParseError(path, lineno, "label must be 0 or 1");
    p.label = label == "1" ? Label::Malicious : Label::Benign;
    out.push_back(std::move(p));
  }
  return out;
}

std::map<std::string, Label> read_truth(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  std::map<std::string, Label> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const auto tab = line.find('\t');
    const std::string value = tab == std::string::npos ? "" : line.substr(tab + 1);
    if (value != "0" && value != "1") throw ParseError(path, lineno, "expected app_key<TAB>0|1");
    if (!out.emplace(line.substr(0, tab), value == "1" ? Label::Malicious : Label::Benign).second) {
      throw ParseError(path, lineno, "duplicate key");
    }
  }
  return out;
}

void write_metrics(const fs::path& dir, const Metrics& m) {
  auto mj = open_out(dir / "metrics.json");
  mj << to_json(m).dump(2) << '\n';
  auto roc = open_out(dir / "roc.csv");
  write_roc_csv(roc, m.roc);
}

// Flags shared by `fit` and the standalone stages.
struct PipelineFlags {
  std::string meta_paths;
  std::string budget = "21,42";
  std::string mode = "hin2img";
  PipelineConfig cfg;

  void add_walk(CLI::App* app) {
    app->add_option("--meta-paths", meta_paths, "meta-path file (default: PID1-PID6 in three groups)");
    app->add_option("--walks-per-node", cfg.walk.walks_per_node, "walks started at every app")->capture_default_str();
    app->add_option("--walk-length", cfg.walk.walk_length, "nodes per walk")->capture_default_str();
  }
  void add_embed(CLI::App* app) {
    app->add_option("--dim", cfg.skipgram.dimension, "embedding dimension d")->capture_default_str();
    app->add_option("--window", cfg.skipgram.window, "skip-gram window w")->capture_default_str();
    app->add_option("--embed-epochs", cfg.skipgram.epochs, "skip-gram epochs")->capture_default_str();
    app->add_option("--lr", cfg.skipgram.initial_lr, "initial skip-gram learning rate")->capture_default_str();
    app->add_option("--min-lr", cfg.skipgram.min_lr, "final skip-gram learning rate")->capture_default_str();
  }
  void add_dnn(CLI::App* app) {
    app->add_option("--budget", budget, "rows per neighbor order, e.g. 21,42")->capture_default_str();
    app->add_option("--mode", mode, "hin2img or localavg")->capture_default_str();
    app->add_option("--dnn-epochs", cfg.dnn.epochs, "classifier epochs")->capture_default_str();
    app->add_option("--dnn-lr", cfg.dnn.learning_rate, "classifier learning rate")->capture_default_str();
    app->add_option("--dnn-momentum", cfg.dnn.momentum, "classifier momentum")->capture_default_str();
    app->add_option("--dnn-clip", cfg.dnn.grad_clip, "max gradient norm per batch (0 disables)")->capture_default_str();
    app->add_option("--dnn-batch", cfg.dnn.batch_size, "classifier batch size")->capture_default_str();
    app->add_option("--dnn-warmup", cfg.dnn.warmup_batches, "batches of linear learning-rate warmup")
        ->capture_default_str();
    app->add_option("--own-row-dropout", cfg.own_row_dropout,
                    "hin2img only: chance a training matrix has its own-embedding row zeroed")
        ->capture_default_str();
  }

  // Resolves derived fields once the command line has been parsed.
  PipelineConfig resolve(std::uint64_t seed, unsigned threads) {
    PipelineConfig c = cfg;
    if (!meta_paths.empty()) c.groups = load_meta_path_groups(meta_paths);
    c.budget = NeighborBudget(parse_budget(budget));
    c.mode = parse_repr_mode(mode);
    const std::uint32_t dnn_epochs = c.dnn.epochs;
    const double dnn_lr = c.dnn.learning_rate, dnn_momentum = c.dnn.momentum;
    const std::uint32_t dnn_batch = c.dnn.batch_size;
    c.set_seed(seed);
    c.dnn.epochs = dnn_epochs;
    c.dnn.learning_rate = dnn_lr;
    c.dnn.momentum = dnn_momentum;
    c.dnn.batch_size = dnn_batch;
    c.walk.threads = threads;
    c.skipgram.threads = threads;
    c.sync_shapes();
    c.validate();
    return c;
  }
};

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"HIN embedding and classification toolkit"};
  app.name("aidroid");
  app.require_subcommand(1, 1);

  std::uint64_t seed = 0;
  unsigned threads = 1;

  // synth
  SynthConfig synth_cfg;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "generate a labeled synthetic HIN with planted classes");
  synth->add_option("--seed", seed, "random seed")->required();
  synth->add_option("--out", synth_out, "output directory (edges.tsv, labels.tsv, split.tsv, manifest.json)")->required();
  synth->add_option("--apps-per-class", synth_cfg.n_apps_per_class)->capture_default_str();
  synth->add_option("--n-api", synth_cfg.n_api)->capture_default_str();
  synth->add_option("--n-imei", synth_cfg.n_imei)->capture_default_str();
  synth->add_option("--n-sig", synth_cfg.n_sig)->capture_default_str();
  synth->add_option("--n-aff", synth_cfg.n_aff)->capture_default_str();
  synth->add_option("--p-intra", synth_cfg.p_intra)->capture_default_str();
  synth->add_option("--p-inter", synth_cfg.p_inter)->capture_default_str();
  synth->add_option("--mean-degree-api", synth_cfg.mean_degree_api)->capture_default_str();
  synth->add_option("--mean-degree-imei", synth_cfg.mean_degree_imei)->capture_default_str();
  synth->add_option("--mean-degree-sig", synth_cfg.mean_degree_sig)->capture_default_str();
  synth->add_option("--mean-degree-aff", synth_cfg.mean_degree_aff)->capture_default_str();
  synth->add_option("--holdout", synth_cfg.holdout_fraction, "out-of-sample fraction")->capture_default_str();

  // walk
  PipelineFlags walk_flags;
  std::string walk_edges, walk_out;
  auto* walk = app.add_subcommand("walk", "sample meta-path guided walks from every app");
  walk->add_option("--edges", walk_edges, "edge list")->required();
  walk->add_option("--out", walk_out, "corpus file")->required();
  walk->add_option("--seed", seed, "random seed")->required();
  walk->add_option("--threads", threads, "worker threads")->capture_default_str();
  walk_flags.add_walk(walk);

  // embed
  PipelineFlags embed_flags;
  std::string embed_edges, embed_corpus, embed_out;
  auto* embed = app.add_subcommand("embed", "train skip-gram embeddings on a walk corpus");
  embed->add_option("--edges", embed_edges, "edge list the corpus was sampled from")->required();
  embed->add_option("--corpus", embed_corpus, "corpus file")->required();
  embed->add_option("--out", embed_out, "embedding file")->required();
  embed->add_option("--seed", seed, "random seed")->required();
  embed->add_option("--threads", threads, "worker threads (>1 is not reproducible)")->capture_default_str();
  embed_flags.add_embed(embed);

  // img
  std::string img_edges, img_embeddings, img_app, img_budget = "21,42", img_format = "json", img_out;
  auto* img = app.add_subcommand("img", "build the representation matrix of one app");
  img->add_option("--edges", img_edges, "edge list (may contain unseen apps)")->required();
  img->add_option("--embeddings", img_embeddings, "embedding file")->required();
  img->add_option("--app", img_app, "app key")->required();
  img->add_option("--budget", img_budget, "rows per neighbor order")->capture_default_str();
  img->add_option("--format", img_format, "json or binary")->check(CLI::IsMember({"json", "binary"}))->capture_default_str();
  img->add_option("--out", img_out, "output file (default: stdout, json only)");

  // fit
  PipelineFlags fit_flags;
  std::string fit_edges, fit_labels, fit_split, fit_out;
  double fit_holdout = 0.2;
  auto* fit_cmd = app.add_subcommand("fit", "embed the in-sample graph and train the classifier");
  fit_cmd->add_option("--edges", fit_edges, "edge list")->required();
  fit_cmd->add_option("--labels", fit_labels, "app labels (app_key<TAB>0|1)")->required();
  fit_cmd->add_option("--split", fit_split, "split file; overrides --holdout");
  fit_cmd->add_option("--holdout", fit_holdout, "out-of-sample fraction when no split is given")->capture_default_str();
  fit_cmd->add_option("--out", fit_out, "artifacts directory")->required();
  fit_cmd->add_option("--seed", seed, "random seed")->required();
  fit_cmd->add_option("--threads", threads, "worker threads (>1 is not reproducible)")->capture_default_str();
  fit_flags.add_walk(fit_cmd);
  fit_flags.add_embed(fit_cmd);
  fit_flags.add_dnn(fit_cmd);

  // predict
  std::string pred_model, pred_edges, pred_apps, pred_labels, pred_out, pred_arrival = "single", pred_metrics;
  auto* predict = app.add_subcommand("predict", "score apps with a fitted model, without retraining");
  predict->add_option("--model", pred_model, "artifacts directory from fit")->required();
  predict->add_option("--edges", pred_edges, "edge list including the new apps")->required();
  predict->add_option("--apps", pred_apps, "app keys to score, one per line (default: held-out apps)");
  predict->add_option("--labels", pred_labels, "true labels; also writes metrics.json and roc.csv");
  predict->add_option("--out", pred_out, "predictions CSV")->required();
  predict->add_option("--arrival", pred_arrival, "single: apps arrive one at a time; batch: all at once")
      ->check(CLI::IsMember({"single", "batch"}))
      ->capture_default_str();
  predict->add_option("--metrics-dir", pred_metrics, "where metrics go (default: directory of --out)");

  // eval
  std::string eval_pred, eval_truth, eval_out;
  auto* eval = app.add_subcommand("eval", "compute metrics from a predictions CSV");
  eval->add_option("--pred", eval_pred, "predictions CSV (app_key,score,label)")->required();
  eval->add_option("--truth", eval_truth, "labels (app_key<TAB>0|1)")->required();
  eval->add_option("--out", eval_out, "directory for metrics.json and roc.csv");

  // bench-oos
  OosBenchConfig bench_cfg;
  bench_cfg.pipeline.walk.walks_per_node = 2;
  bench_cfg.pipeline.walk.walk_length = 20;
  std::vector<std::size_t> bench_sizes{1000, 10000};
  std::string bench_out;
  auto* bench = app.add_subcommand("bench-oos", "per-node predict latency on growing synthetic graphs");
  bench->add_option("--seed", seed, "random seed")->required();
  bench->add_option("--sizes", bench_sizes, "graph sizes in nodes")->delimiter(',')->capture_default_str();
  bench->add_option("--probes", bench_cfg.probes, "timed apps per graph")->capture_default_str();
  bench->add_option("--repeats", bench_cfg.repeats, "timings per app (minimum kept)")->capture_default_str();
  bench->add_option("--walks-per-node", bench_cfg.pipeline.walk.walks_per_node)->capture_default_str();
  bench->add_option("--walk-length", bench_cfg.pipeline.walk.walk_length)->capture_default_str();
  bench->add_option("--dim", bench_cfg.pipeline.skipgram.dimension)->capture_default_str();
  bench->add_option("--out", bench_out, "JSON report file (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*synth) {
      synth_cfg.seed = seed;
      synth_cfg.validate();
      log_config(err, "synth", synth_json(synth_cfg));
      const LabeledDataset ds = synth_hin(synth_cfg);
      const fs::path dir(synth_out);
      auto edges = open_out(dir / "edges.tsv");
      write_edge_list(edges, ds.hin);
      auto labels = open_out(dir / "labels.tsv");
      write_labels(labels, ds.hin, ds.labels);
      auto split = open_out(dir / "split.tsv");
      write_split(split, ds);
      auto manifest = open_out(dir / "manifest.json");
      manifest << synth_json(synth_cfg).dump(2) << '\n';
      err << "wrote " << ds.hin.node_count() << " nodes, " << ds.hin.edge_count() << " edges to " << dir.string()
          << '\n';
    } else if (*walk) {
      const PipelineConfig cfg = walk_flags.resolve(seed, threads);
      json j = walk_json(cfg.walk);
      j["meta_path_groups"] = to_json(cfg)["meta_path_groups"];
      log_config(err, "walk", j);
      const Hin hin = load_edge_list(walk_edges);
      const WalkCorpus corpus = sample_corpus(hin, cfg);
      auto f = open_out(walk_out);
      write_corpus(f, hin, corpus);
      err << "wrote " << corpus.walks.size() << " walks, " << corpus.token_count() << " tokens\n";
    } else if (*embed) {
      const PipelineConfig cfg = embed_flags.resolve(seed, threads);
      log_config(err, "embed", skipgram_json(cfg.skipgram));
      const Hin hin = load_edge_list(embed_edges);
      std::ifstream cin(embed_corpus);
      if (!cin) throw InputError("cannot open " + embed_corpus);
      const WalkCorpus corpus = read_corpus(cin, hin, embed_corpus);
      const EmbeddingTable table = train_embeddings(corpus, cfg.skipgram, hin.node_count());
      save_embeddings(embed_out, hin, table);
      err << "wrote " << table.size() << " embeddings\n";
    } else if (*img) {
      const NeighborBudget budget(parse_budget(img_budget));
      log_config(err, "img", {{"rows_per_order", budget.rows_per_order}, {"app", img_app}, {"format", img_format}});
      const Hin hin = load_edge_list(img_edges);
      const EmbeddingTable table = load_embeddings(img_embeddings, hin);
      const auto v = hin.find(NodeType::App, img_app);
      if (!v) throw ReferenceError("unknown app '" + img_app + "'");
      const ReprMatrix m = build_repr_matrix(hin, table, *v, budget);
      if (img_format == "binary") {
        if (img_out.empty()) throw InputError("--format binary needs --out");
        auto f = open_out(img_out);
        write_matrix_binary(f, m);
      } else if (img_out.empty()) {
        out << matrix_to_json(m) << '\n';
      } else {
        auto f = open_out(img_out);
        f << matrix_to_json(m) << '\n';
      }
    } else if (*fit_cmd) {
      const PipelineConfig cfg = fit_flags.resolve(seed, threads);
      json j = to_json(cfg);
      j["holdout"] = fit_split.empty() ? json(fit_holdout) : json(nullptr);
      j["split"] = fit_split;
      j["seed"] = seed;
      log_config(err, "fit", j);
      LabeledDataset ds = load_dataset(fit_edges, fit_labels, fit_holdout, seed);
      if (!fit_split.empty()) read_split(fit_split, ds);
      const PipelineArtifacts artifacts = fit(ds, cfg);
      save_artifacts(fit_out, artifacts, ds);
      err << "trained on " << ds.in_sample.size() << " apps; final loss " << artifacts.report.epoch_loss.back()
          << '\n';
    } else if (*predict) {
      log_config(err, "predict",
                 {{"model", pred_model}, {"edges", pred_edges}, {"apps", pred_apps}, {"arrival", pred_arrival}});
      LoadedArtifacts loaded = load_artifacts(pred_model);
      const Hin hin = load_edge_list(pred_edges);
      std::vector<NodeId> apps;
      const std::vector<std::string> keys = pred_apps.empty() ? loaded.out_of_sample_keys : read_key_list(pred_apps);
      for (const auto& k : keys) {
        const auto id = hin.find(NodeType::App, k);
        if (!id) throw ReferenceError("app '" + k + "' is not in " + pred_edges);
        apps.push_back(*id);
      }
      if (apps.empty()) throw EmptyInputError("no apps to score");

      std::vector<AppPrediction> preds;
      if (pred_arrival == "batch") {
        const Predictor p(loaded.config, loaded.model, hin, load_artifact_embeddings(pred_model, hin));
        preds = p.predict(apps);
      } else {
        // The embedding graph is the input graph without the held-out apps.
        const std::set<std::string> in_sample(loaded.in_sample_keys.begin(), loaded.in_sample_keys.end());
        std::set<std::string> held_out(loaded.out_of_sample_keys.begin(), loaded.out_of_sample_keys.end());
        for (const auto& k : keys) {
          if (!in_sample.contains(k)) held_out.insert(k);
        }
        Hin base = hin.induced_subgraph([&](NodeId v) {
          return hin.type(v) != NodeType::App || !held_out.contains(hin.key(v));
        });
        EmbeddingTable table = load_artifact_embeddings(pred_model, base);
        ArrivalPredictor p(loaded.config, loaded.model, std::move(base), std::move(table));
        preds = p.predict(hin, apps);
      }

      auto csv = open_out(pred_out);
      csv << "app_key,score,label\n";
      std::size_t low = 0;
      for (const auto& p : preds) {
        csv << hin.key(p.app) << ',' << format_double(p.prediction.score()) << ','
            << static_cast<int>(p.prediction.label) << '\n';
        low += p.low_evidence;
      }
      if (low > 0) err << "warning: " << low << " app(s) had no embedded neighborhood (low evidence)\n";
      if (!pred_labels.empty()) {
        std::ifstream lin(pred_labels);
        if (!lin) throw InputError("cannot open " + pred_labels);
        const auto labels = read_labels(lin, hin, pred_labels);
        std::vector<Prediction> scored;
        std::vector<Label> truth;
        for (const auto& p : preds) {
          const auto it = labels.find(p.app);
          if (it == labels.end()) throw ReferenceError("no label for app '" + hin.key(p.app) + "'");
          scored.push_back(p.prediction);
          truth.push_back(it->second);
        }
        const Metrics m = evaluate(scored, truth);
        const fs::path dir = pred_metrics.empty() ? fs::path(pred_out).parent_path() : fs::path(pred_metrics);
        write_metrics(dir.empty() ? fs::path(".") : dir, m);
        out << to_json(m).dump() << '\n';
      }
    } else if (*eval) {
      log_config(err, "eval", {{"pred", eval_pred}, {"truth", eval_truth}, {"out", eval_out}});
      const auto preds = read_predictions(eval_pred);
      const auto truth = read_truth(eval_truth);
      if (preds.size() != truth.size()) {
        throw InputError("prediction count " + std::to_string(preds.size()) + " differs from truth count " +
                         std::to_string(truth.size()));
      }
      std::vector<double> scores;
      std::vector<Label> predicted, actual;
      for (const auto& p : preds) {
        const auto it = truth.find(p.key);
        if (it == truth.end()) throw ReferenceError("no truth for app '" + p.key + "'");
        scores.push_back(p.score);
        predicted.push_back(p.label);
        actual.push_back(it->second);
      }
      const Metrics m = evaluate(scores, predicted, actual);
      if (!eval_out.empty()) write_metrics(eval_out, m);
      out << to_json(m).dump() << '\n';
    } else if (*bench) {
      bench_cfg.seed = seed;
      bench_cfg.node_counts = bench_sizes;
      bench_cfg.pipeline.set_seed(seed);
      bench_cfg.pipeline.sync_shapes();
      json j = to_json(bench_cfg.pipeline);
      j["sizes"] = bench_sizes;
      j["probes"] = bench_cfg.probes;
      j["repeats"] = bench_cfg.repeats;
      log_config(err, "bench-oos", j);
      const auto rows = bench_oos(bench_cfg);
      json report{{"rows", json::array()}};
      for (const auto& r : rows) {
        report["rows"].push_back(
            {{"nodes", r.nodes}, {"edges", r.edges}, {"median_ms", r.median_ms}, {"p90_ms", r.p90_ms}});
      }
      if (rows.size() >= 2) report["median_ratio_last_to_first"] = rows.back().median_ms / rows.front().median_ms;
      if (bench_out.empty()) {
        out << report.dump(2) << '\n';
      } else {
        auto f = open_out(bench_out);
        f << report.dump(2) << '\n';
      }
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

}  // namespace aidroid
