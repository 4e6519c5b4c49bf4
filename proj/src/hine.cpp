#include "aidroid/hine.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <queue>
#include <tuple>

#include "aidroid/error.hpp"
#include "aidroid/parallel.hpp"
#include "aidroid/random.hpp"

namespace aidroid {

namespace {

double sigmoid(double z) {
  return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

// log(sigmoid(z)) without overflow.
double log_sigmoid(double z) {
  return z >= 0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z));
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double sign_of(std::uint8_t code) { return code == 0 ? 1.0 : -1.0; }

}  // namespace

void SkipGramConfig::validate() const {
  if (dimension < 1) throw InputError("embedding dimension must be >= 1");
  if (window < 1) throw InputError("window must be >= 1");
  if (epochs < 1) throw InputError("epochs must be >= 1");
  if (!(initial_lr > min_lr && min_lr > 0.0)) throw InputError("need initial_lr > min_lr > 0");
}

HuffmanTree HuffmanTree::build(std::span<const std::uint64_t> counts) {
  HuffmanTree tree;
  const std::size_t n = counts.size();
  tree.points_.resize(n);
  tree.codes_.resize(n);
  if (n <= 1) return tree;

  // (weight, tie key, node); leaves use their index as key, internal nodes
  // n + creation order, so leaves sort before internal nodes of equal weight.
  using Item = std::tuple<std::uint64_t, std::size_t, std::size_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
  for (std::size_t i = 0; i < n; ++i) queue.emplace(counts[i], i, i);
  std::vector<std::size_t> parent(2 * n - 1, 0);
  std::vector<std::uint8_t> branch(2 * n - 1, 0);
  for (std::size_t k = 0; k + 1 < n; ++k) {
    auto [w1, key1, a] = queue.top();
    queue.pop();
    auto [w2, key2, b] = queue.top();
    queue.pop();
    const std::size_t node = n + k;
    parent[a] = node;
    parent[b] = node;
    branch[a] = 0;
    branch[b] = 1;
    queue.emplace(w1 + w2, node, node);
  }
  const std::size_t root = 2 * n - 2;
  for (std::size_t leaf = 0; leaf < n; ++leaf) {
    auto& pts = tree.points_[leaf];
    auto& codes = tree.codes_[leaf];
    for (std::size_t v = leaf; v != root; v = parent[v]) {
      codes.push_back(branch[v]);
      pts.push_back(static_cast<std::uint32_t>(parent[v] - n));
    }
    std::reverse(pts.begin(), pts.end());
    std::reverse(codes.begin(), codes.end());
  }
  return tree;
}

Vocab build_vocab(const WalkCorpus& corpus) {
  NodeId max_id = 0;
  bool any = false;
  for (const auto& walk : corpus.walks) {
    for (NodeId v : walk) {
      max_id = std::max(max_id, v);
      any = true;
    }
  }
  if (!any) throw EmptyInputError("empty walk corpus");
  std::vector<std::uint64_t> count_of(static_cast<std::size_t>(max_id) + 1, 0);
  for (const auto& walk : corpus.walks) {
    for (NodeId v : walk) ++count_of[v];
  }
  Vocab vocab;
  vocab.index_of.assign(count_of.size(), -1);
  for (NodeId v = 0; v < count_of.size(); ++v) {
    if (count_of[v] == 0) continue;
    vocab.index_of[v] = static_cast<std::int32_t>(vocab.nodes.size());
    vocab.nodes.push_back(v);
    vocab.counts.push_back(count_of[v]);
  }
  return vocab;
}

std::size_t SkipGramModel::index(NodeId v) const {
  const auto i = vocab.find(v);
  if (i < 0) throw VocabError("node " + std::to_string(v) + " is not in the vocabulary");
  return static_cast<std::size_t>(i);
}

SkipGramModel build_vocab_and_tree(const WalkCorpus& corpus, std::size_t dim) {
  if (dim == 0) throw InputError("embedding dimension must be >= 1");
  SkipGramModel model;
  model.vocab = build_vocab(corpus);
  model.tree = HuffmanTree::build(model.vocab.counts);
  model.dim = dim;
  model.input.assign(model.vocab.size() * dim, 0.0);
  model.inner.assign(model.tree.internal_count() * dim, 0.0);
  return model;
}

void initialize(SkipGramModel& model, std::uint64_t seed) {
  Rng rng(derive_seed(seed, {0xe1b}));
  const double half = 0.5 / static_cast<double>(model.dim);
  for (double& x : model.input) x = uniform_real(rng, -half, half);
  std::fill(model.inner.begin(), model.inner.end(), 0.0);
}

double pair_loss(const SkipGramModel& model, std::size_t center, std::size_t context) {
  const auto x = model.x(center);
  const auto points = model.tree.points(context);
  const auto codes = model.tree.codes(context);
  double loss = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    loss -= log_sigmoid(sign_of(codes[i]) * dot(x, model.theta(points[i])));
  }
  return loss;
}

double hs_probability(const SkipGramModel& model, NodeId center, NodeId context) {
  return std::exp(-pair_loss(model, model.index(center), model.index(context)));
}

PairGradient pair_gradient(const SkipGramModel& model, std::size_t center, std::size_t context) {
  const auto x = model.x(center);
  const auto points = model.tree.points(context);
  const auto codes = model.tree.codes(context);
  PairGradient g;
  g.d_center.assign(model.dim, 0.0);
  g.d_inner.assign(points.size() * model.dim, 0.0);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto theta = model.theta(points[i]);
    const double s = sign_of(codes[i]);
    // d/dz of -log sigmoid(s z) is -s (1 - sigmoid(s z)).
    const double coeff = -s * (1.0 - sigmoid(s * dot(x, theta)));
    for (std::size_t k = 0; k < model.dim; ++k) {
      g.d_center[k] += coeff * theta[k];
      g.d_inner[i * model.dim + k] = coeff * x[k];
    }
  }
  return g;
}

void sgd_step(SkipGramModel& model, std::size_t center, std::size_t context, double lr) {
  const std::size_t dim = model.dim;
  double* x = model.input.data() + center * dim;
  const auto points = model.tree.points(context);
  const auto codes = model.tree.codes(context);
  // Accumulate the center update against the pre-step tree parameters.
  thread_local std::vector<double> acc;
  acc.assign(dim, 0.0);
  for (std::size_t i = 0; i < points.size(); ++i) {
    double* theta = model.inner.data() + static_cast<std::size_t>(points[i]) * dim;
    double z = 0.0;
    for (std::size_t k = 0; k < dim; ++k) z += x[k] * theta[k];
    const double s = sign_of(codes[i]);
    const double g = lr * s * (1.0 - sigmoid(s * z));
    for (std::size_t k = 0; k < dim; ++k) acc[k] += g * theta[k];
    for (std::size_t k = 0; k < dim; ++k) theta[k] += g * x[k];
  }
  for (std::size_t k = 0; k < dim; ++k) x[k] += acc[k];
}

double corpus_loss(const SkipGramModel& model, const WalkCorpus& corpus, std::size_t window) {
  double total = 0.0;
  std::size_t pairs = 0;
  for (const auto& walk : corpus.walks) {
    for (std::size_t j = 0; j < walk.size(); ++j) {
      const std::size_t c = model.index(walk[j]);
      const std::size_t lo = j >= window ? j - window : 0;
      const std::size_t hi = std::min(walk.size(), j + window + 1);
      for (std::size_t q = lo; q < hi; ++q) {
        if (q == j) continue;
        total += pair_loss(model, c, model.index(walk[q]));
        ++pairs;
      }
    }
  }
  return pairs ? total / static_cast<double>(pairs) : 0.0;
}

namespace {

// Trains on walks [begin, end) with a learning rate driven by the shared
// progress counter.
void train_range(SkipGramModel& model, const WalkCorpus& corpus, const SkipGramConfig& cfg, std::size_t begin,
                 std::size_t end, std::atomic<std::uint64_t>& processed, std::uint64_t total) {
  const std::size_t w = cfg.window;
  std::vector<std::size_t> idx;
  for (std::size_t n = begin; n < end; ++n) {
    const auto& walk = corpus.walks[n];
    idx.resize(walk.size());
    for (std::size_t j = 0; j < walk.size(); ++j) idx[j] = static_cast<std::size_t>(model.vocab.index_of[walk[j]]);
    for (std::size_t j = 0; j < walk.size(); ++j) {
      const double progress =
          static_cast<double>(processed.fetch_add(1, std::memory_order_relaxed)) / static_cast<double>(total);
      const double lr = cfg.initial_lr - (cfg.initial_lr - cfg.min_lr) * std::min(progress, 1.0);
      const std::size_t lo = j >= w ? j - w : 0;
      const std::size_t hi = std::min(walk.size(), j + w + 1);
      for (std::size_t q = lo; q < hi; ++q) {
        if (q != j) sgd_step(model, idx[j], idx[q], lr);
      }
    }
  }
}

}  // namespace

SkipGramModel train_skipgram(const WalkCorpus& corpus, const SkipGramConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  SkipGramModel model = build_vocab_and_tree(corpus, cfg.dimension);
  initialize(model, cfg.seed);
  const std::uint64_t total = static_cast<std::uint64_t>(cfg.epochs) * corpus.token_count();
  std::atomic<std::uint64_t> processed{0};
  for (std::uint32_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    parallel_for_blocks(corpus.walks.size(), cfg.threads, [&](std::size_t begin, std::size_t end) {
      train_range(model, corpus, cfg, begin, end, processed, total);
    });
    const bool finite = std::all_of(model.input.begin(), model.input.end(), [](double v) { return std::isfinite(v); }) &&
                        std::all_of(model.inner.begin(), model.inner.end(), [](double v) { return std::isfinite(v); });
    if (!finite) throw Error("skip-gram training diverged (non-finite parameter) in epoch " + std::to_string(epoch));
    if (on_epoch) on_epoch(epoch, model);
  }
  return model;
}

EmbeddingTable to_embedding_table(const SkipGramModel& model, std::size_t node_capacity) {
  EmbeddingTable table(model.dim, node_capacity);
  for (std::size_t i = 0; i < model.vocab.size(); ++i) table.set(model.vocab.nodes[i], model.x(i));
  return table;
}

EmbeddingTable train_embeddings(const WalkCorpus& corpus, const SkipGramConfig& cfg, std::size_t node_capacity) {
  return to_embedding_table(train_skipgram(corpus, cfg), node_capacity);
}

}  // namespace aidroid
