#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "aidroid/embedding_table.hpp"
#include "aidroid/walker.hpp"

namespace aidroid {

struct SkipGramConfig {
  std::uint32_t dimension = 64;  // d
  std::uint32_t window = 5;      // w
  std::uint32_t epochs = 1;
  double initial_lr = 0.025;
  double min_lr = 0.025e-4;
  std::uint64_t seed = 1;
  // 1 = deterministic. More threads apply unsynchronized (hogwild) updates
  // and give up reproducibility.
  unsigned threads = 1;

  void validate() const;
};

// Huffman coding over leaves 0..n-1. Ties are broken by leaf index, and a
// leaf wins a tie against an internal node.
class HuffmanTree {
 public:
  static HuffmanTree build(std::span<const std::uint64_t> counts);

  std::size_t leaf_count() const { return points_.size(); }
  std::size_t internal_count() const { return leaf_count() == 0 ? 0 : leaf_count() - 1; }

  // Internal nodes on the root-to-leaf path and the branch taken at each.
  std::span<const std::uint32_t> points(std::size_t leaf) const { return points_[leaf]; }
  std::span<const std::uint8_t> codes(std::size_t leaf) const { return codes_[leaf]; }
  std::size_t code_length(std::size_t leaf) const { return codes_[leaf].size(); }

 private:
  std::vector<std::vector<std::uint32_t>> points_;
  std::vector<std::vector<std::uint8_t>> codes_;
};

// Corpus nodes in NodeId order with their occurrence counts.
struct Vocab {
  std::vector<NodeId> nodes;
  std::vector<std::uint64_t> counts;
  std::vector<std::int32_t> index_of;  // NodeId -> vocab index or -1

  std::size_t size() const { return nodes.size(); }
  std::int32_t find(NodeId v) const {
    return v < index_of.size() ? index_of[v] : -1;
  }
};

Vocab build_vocab(const WalkCorpus& corpus);

// Input ("center") vectors X plus one parameter vector per internal tree node.
struct SkipGramModel {
  Vocab vocab;
  HuffmanTree tree;
  std::size_t dim = 0;
  std::vector<double> input;  // vocab.size() x dim
  std::vector<double> inner;  // tree.internal_count() x dim

  std::span<double> x(std::size_t i) { return std::span<double>(input).subspan(i * dim, dim); }
  std::span<const double> x(std::size_t i) const { return std::span<const double>(input).subspan(i * dim, dim); }
  std::span<double> theta(std::size_t n) { return std::span<double>(inner).subspan(n * dim, dim); }
  std::span<const double> theta(std::size_t n) const {
    return std::span<const double>(inner).subspan(n * dim, dim);
  }

  std::size_t index(NodeId v) const;  // throws VocabError
};

// Vocabulary and Huffman tree for a corpus. Throws EmptyInputError.
SkipGramModel build_vocab_and_tree(const WalkCorpus& corpus, std::size_t dim);

// X uniform in [-0.5/d, 0.5/d] from the seed, tree parameters zero.
void initialize(SkipGramModel& model, std::uint64_t seed);

// p(context | center) = prod over the context's code of sigmoid(+-<X(center), theta>).
double hs_probability(const SkipGramModel& model, NodeId center, NodeId context);

// -log p for vocab indices; the objective of one (center, context) pair.
double pair_loss(const SkipGramModel& model, std::size_t center, std::size_t context);

struct PairGradient {
  std::vector<double> d_center;  // dim
  std::vector<double> d_inner;   // code_length(context) x dim, aligned with points(context)
};

PairGradient pair_gradient(const SkipGramModel& model, std::size_t center, std::size_t context);

// One SGD step on pair_loss.
void sgd_step(SkipGramModel& model, std::size_t center, std::size_t context, double lr);

// Mean pair_loss over all (v_j, v_{j+k}) pairs with 0 < |k| <= window.
double corpus_loss(const SkipGramModel& model, const WalkCorpus& corpus, std::size_t window);

// Called after every epoch with (epoch index, model).
using EpochCallback = std::function<void(std::size_t, const SkipGramModel&)>;

SkipGramModel train_skipgram(const WalkCorpus& corpus, const SkipGramConfig& cfg,
                             const EpochCallback& on_epoch = {});

// Copies the input vectors into a table sized for a graph of `node_capacity` nodes.
EmbeddingTable to_embedding_table(const SkipGramModel& model, std::size_t node_capacity);

EmbeddingTable train_embeddings(const WalkCorpus& corpus, const SkipGramConfig& cfg, std::size_t node_capacity);

}  // namespace aidroid
