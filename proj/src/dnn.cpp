#include "aidroid/dnn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "aidroid/error.hpp"
#include "aidroid/random.hpp"

namespace aidroid {

namespace {

constexpr char kModelMagic[8] = {'A', 'I', 'D', 'R', 'D', 'N', 'N', '\0'};
constexpr std::uint32_t kModelFormatVersion = 1;

using nn::LayerPtr;

// Activation tensors are tens of megabytes. glibc would otherwise serve each
// one with a fresh mmap and pay page faults on every layer of every batch.
void keep_large_blocks_in_heap() {
#if defined(__GLIBC__)
  static const bool done = [] {
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    return true;
  }();
  (void)done;
#endif
}

nn::Sequential build_network(const DnnConfig& cfg) {
  nn::Sequential net;
  std::size_t channels = 1;
  for (const auto& spec : cfg.stem) {
    net.add(std::make_unique<nn::Conv2D>(channels, spec.filters, spec.kernel, spec.stride, !cfg.stem_batchnorm));
    if (cfg.stem_batchnorm) net.add(std::make_unique<nn::BatchNorm2D>(spec.filters, cfg.bn_eps, cfg.bn_momentum));
    net.add(std::make_unique<nn::ReLU>());
    if (cfg.stem_pool > 1) net.add(std::make_unique<nn::MaxPool2D>(cfg.stem_pool, cfg.stem_pool, 0));
    channels = spec.filters;
  }
  if (cfg.use_inception) {
    const auto& w = cfg.inception;
    auto conv = [](std::size_t in, std::size_t out, std::size_t k) {
      return std::make_unique<nn::Conv2D>(in, out, k, 1, true);
    };
    std::vector<nn::Sequential> branches(4);
    branches[0].add(conv(channels, w.b1, 1));
    branches[0].add(std::make_unique<nn::ReLU>());
    branches[1].add(conv(channels, w.b3_reduce, 1));
    branches[1].add(std::make_unique<nn::ReLU>());
    branches[1].add(conv(w.b3_reduce, w.b3, 3));
    branches[1].add(std::make_unique<nn::ReLU>());
    branches[2].add(conv(channels, w.b5_reduce, 1));
    branches[2].add(std::make_unique<nn::ReLU>());
    branches[2].add(conv(w.b5_reduce, w.b5, 5));
    branches[2].add(std::make_unique<nn::ReLU>());
    branches[3].add(std::make_unique<nn::MaxPool2D>(3, 1, 1));
    branches[3].add(conv(channels, w.pool_proj, 1));
    branches[3].add(std::make_unique<nn::ReLU>());
    net.add(std::make_unique<nn::Inception>(std::move(branches)));
  }
  if (cfg.global_pool) net.add(std::make_unique<nn::GlobalMaxPool>());
  const nn::Shape features = net.output_shape({1, cfg.input_rows, cfg.input_cols});
  net.add(std::make_unique<nn::Dense>(features.size(), cfg.outputs));
  return net;
}

}  // namespace

void DnnConfig::validate() const {
  if (input_rows < 1 || input_cols < 1) throw InputError("DNN input shape must be positive");
  if (outputs != 2) throw InputError("the classifier has exactly 2 outputs (benign, malicious)");
  for (const auto& s : stem) {
    if (s.filters < 1 || s.kernel < 1 || s.stride < 1) throw InputError("stem widths must be >= 1");
  }
  const auto& w = inception;
  if (use_inception && (w.b1 < 1 || w.b3_reduce < 1 || w.b3 < 1 || w.b5_reduce < 1 || w.b5 < 1 || w.pool_proj < 1)) {
    throw InputError("inception widths must be >= 1");
  }
  if (!(learning_rate > 0.0)) throw InputError("learning rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw InputError("momentum must lie in [0, 1)");
  if (!(grad_clip >= 0.0)) throw InputError("gradient clip must be >= 0");
  if (!(first_row_dropout >= 0.0 && first_row_dropout < 1.0)) throw InputError("first-row dropout must lie in [0, 1)");
  if (batch_size < 1 || epochs < 1) throw InputError("batch size and epochs must be >= 1");
  if (!(bn_eps > 0.0) || !(bn_momentum > 0.0 && bn_momentum <= 1.0)) throw InputError("bad batch-norm settings");
}

DnnConfig DnnConfig::dense_only(std::uint32_t rows, std::uint32_t cols) {
  DnnConfig c;
  c.input_rows = rows;
  c.input_cols = cols;
  c.stem.clear();
  c.use_inception = false;
  c.global_pool = false;
  return c;
}

void to_json(nlohmann::json& j, const DnnConfig& c) {
  nlohmann::json stem = nlohmann::json::array();
  for (const auto& s : c.stem) stem.push_back({{"filters", s.filters}, {"kernel", s.kernel}, {"stride", s.stride}});
  const auto& w = c.inception;
  j = {{"input_rows", c.input_rows},
       {"input_cols", c.input_cols},
       {"stem", stem},
       {"stem_batchnorm", c.stem_batchnorm},
       {"stem_pool", c.stem_pool},
       {"use_inception", c.use_inception},
       {"inception",
        {{"b1", w.b1}, {"b3_reduce", w.b3_reduce}, {"b3", w.b3}, {"b5_reduce", w.b5_reduce}, {"b5", w.b5},
         {"pool_proj", w.pool_proj}}},
       {"global_pool", c.global_pool},
       {"outputs", c.outputs},
       {"bn_eps", c.bn_eps},
       {"bn_momentum", c.bn_momentum},
       {"learning_rate", c.learning_rate},
       {"momentum", c.momentum},
       {"grad_clip", c.grad_clip},
       {"batch_size", c.batch_size},
       {"warmup_batches", c.warmup_batches},
       {"epochs", c.epochs},
       {"first_row_dropout", c.first_row_dropout},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, DnnConfig& c) {
  c = DnnConfig{};
  c.input_rows = j.at("input_rows");
  c.input_cols = j.at("input_cols");
  c.stem.clear();
  for (const auto& s : j.at("stem")) c.stem.push_back({s.at("filters"), s.at("kernel"), s.at("stride")});
  c.stem_batchnorm = j.at("stem_batchnorm");
  c.stem_pool = j.at("stem_pool");
  c.use_inception = j.at("use_inception");
  const auto& w = j.at("inception");
  c.inception = {w.at("b1"), w.at("b3_reduce"), w.at("b3"), w.at("b5_reduce"), w.at("b5"), w.at("pool_proj")};
  c.global_pool = j.at("global_pool");
  c.outputs = j.at("outputs");
  c.bn_eps = j.at("bn_eps");
  c.bn_momentum = j.at("bn_momentum");
  c.learning_rate = j.at("learning_rate");
  c.momentum = j.at("momentum");
  c.grad_clip = j.at("grad_clip");
  c.batch_size = j.at("batch_size");
  c.warmup_batches = j.at("warmup_batches");
  c.epochs = j.at("epochs");
  c.first_row_dropout = j.at("first_row_dropout");
  c.seed = j.at("seed");
}

DnnModel::DnnModel(const DnnConfig& cfg) : config_(cfg) {
  config_.validate();
  keep_large_blocks_in_heap();
  net_ = build_network(config_);
  Rng rng(derive_seed(config_.seed, {0xd22}));
  net_.init(rng);

  // Declared shapes must agree with what the layers actually produce.
  nn::Tensor probe(1, input_shape());
  nn::Shape declared = input_shape();
  for (const auto& layer : net_.layers()) {
    declared = layer->output_shape(declared);
    probe = layer->infer(probe);
    if (!(probe.shape == declared)) {
      throw ShapeError(layer->name() + ": declared " + nn::to_string(declared) + " but produced " +
                       nn::to_string(probe.shape));
    }
  }
  if (!(declared == nn::Shape{config_.outputs, 1, 1})) throw ShapeError("network does not end in the output layer");
}

nlohmann::json DnnModel::describe() const {
  nlohmann::json layers = nlohmann::json::array();
  nn::Shape s = input_shape();
  for (const auto& layer : net_.layers()) {
    nlohmann::json entry{{"layer", layer->name()}, {"input", nn::to_string(s)}};
    if (const auto* inc = dynamic_cast<const nn::Inception*>(layer.get())) {
      nlohmann::json branches = nlohmann::json::array();
      for (const auto& b : inc->branches()) {
        nlohmann::json names = nlohmann::json::array();
        for (const auto& l : b.layers()) names.push_back(l->name());
        branches.push_back({{"layers", names}, {"output", nn::to_string(b.output_shape(s))}});
      }
      entry["branches"] = branches;
    }
    s = layer->output_shape(s);
    entry["output"] = nn::to_string(s);
    layers.push_back(entry);
  }
  return layers;
}

nn::Tensor DnnModel::make_batch(std::span<const ReprMatrix> xs) const {
  nn::Tensor batch(xs.size(), input_shape());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (xs[i].rows != config_.input_rows || xs[i].cols != config_.input_cols) {
      throw ShapeError("representation matrix is " + std::to_string(xs[i].rows) + "x" + std::to_string(xs[i].cols) +
                       ", model expects " + std::to_string(config_.input_rows) + "x" +
                       std::to_string(config_.input_cols));
    }
    std::copy(xs[i].values.begin(), xs[i].values.end(), batch.sample(i).begin());
  }
  return batch;
}

std::vector<Prediction> DnnModel::predict(std::span<const ReprMatrix> xs) const {
  std::vector<Prediction> out;
  out.reserve(xs.size());
  if (xs.empty()) return out;
  const nn::Tensor logits = net_.infer(make_batch(xs));
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const auto p = nn::softmax(logits.sample(i));
    Prediction pred;
    pred.probabilities = {p[0], p[1]};
    pred.label = p[1] > p[0] ? Label::Malicious : Label::Benign;
    out.push_back(pred);
  }
  return out;
}

Prediction DnnModel::predict(const ReprMatrix& x) const { return predict(std::span<const ReprMatrix>(&x, 1)).front(); }

void DnnModel::zero_grad() {
  for (auto& p : net_.params()) std::fill(p.grad.begin(), p.grad.end(), 0.0);
}

std::vector<std::uint64_t> DnnModel::kink_signature() const {
  std::vector<std::uint64_t> sig;
  net_.kink_signature(sig);
  return sig;
}

void DnnModel::save(std::ostream& out) const {
  auto& net = const_cast<nn::Sequential&>(net_);
  const std::string header = nlohmann::json{{"config", config_}, {"architecture", describe()}}.dump();
  out.write(kModelMagic, sizeof kModelMagic);
  const std::uint32_t version = kModelFormatVersion;
  out.write(reinterpret_cast<const char*>(&version), sizeof version);
  const std::uint64_t header_len = header.size();
  out.write(reinterpret_cast<const char*>(&header_len), sizeof header_len);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  auto write_block = [&](std::span<const double> values) {
    const std::uint64_t n = values.size();
    out.write(reinterpret_cast<const char*>(&n), sizeof n);
    out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(n * sizeof(double)));
  };
  for (const auto& p : net.params()) write_block(p.value);
  for (const auto& b : net.buffers()) write_block(b);
  if (!out) throw InputError("failed to write model");
}

void DnnModel::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path);
  save(out);
}

DnnModel DnnModel::load(std::istream& in) {
  char magic[sizeof kModelMagic];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kModelMagic, sizeof magic) != 0) throw InputError("not a model file");
  std::uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  if (!in) throw InputError("truncated model header");
  if (version != kModelFormatVersion) {
    throw VersionError("model format version " + std::to_string(version) + " is not supported (expected " +
                       std::to_string(kModelFormatVersion) + ")");
  }
  std::uint64_t header_len = 0;
  in.read(reinterpret_cast<char*>(&header_len), sizeof header_len);
  if (!in || header_len > (1u << 24)) throw InputError("bad model header length");
  std::string header(header_len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw InputError("truncated model header");
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("bad model header: ") + e.what());
  }
  DnnModel model(meta.at("config").get<DnnConfig>());
  if (model.describe() != meta.at("architecture")) throw InputError("model architecture does not match its config");
  auto read_block = [&](std::span<double> values) {
    std::uint64_t n = 0;
    in.read(reinterpret_cast<char*>(&n), sizeof n);
    if (!in || n != values.size()) throw InputError("model tensor size mismatch");
    in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(n * sizeof(double)));
    if (!in) throw InputError("truncated model tensor");
  };
  for (auto& p : model.net_.params()) read_block(p.value);
  for (auto& b : model.net_.buffers()) read_block(b);
  return model;
}

DnnModel DnnModel::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open model " + path);
  return load(in);
}

namespace {

std::vector<std::uint8_t> to_bytes(std::span<const Label> labels) {
  std::vector<std::uint8_t> out(labels.size());
  std::transform(labels.begin(), labels.end(), out.begin(), [](Label l) { return static_cast<std::uint8_t>(l); });
  return out;
}

std::vector<ReprMatrix> gather(std::span<const ReprMatrix> xs, std::span<const std::size_t> idx) {
  std::vector<ReprMatrix> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(xs[i]);
  return out;
}

}  // namespace

double dataset_loss(DnnModel& model, std::span<const ReprMatrix> xs, std::span<const Label> labels) {
  if (xs.size() != labels.size()) throw InputError("matrix and label counts differ");
  const auto y = to_bytes(labels);
  const std::size_t bs = model.config().batch_size;
  double total = 0.0;
  for (std::size_t begin = 0; begin < xs.size(); begin += bs) {
    const std::size_t end = std::min(xs.size(), begin + bs);
    const nn::Tensor logits = model.forward(model.make_batch(xs.subspan(begin, end - begin)), nn::Phase::Probe);
    total += nn::softmax_cross_entropy(logits, std::span(y).subspan(begin, end - begin), nullptr) *
             static_cast<double>(end - begin);
  }
  return xs.empty() ? 0.0 : total / static_cast<double>(xs.size());
}

TrainReport train(DnnModel& model, std::span<const ReprMatrix> xs, std::span<const Label> labels,
                  const std::function<void(std::size_t, double)>& on_epoch) {
  if (xs.empty()) throw EmptyInputError("no training samples");
  if (xs.size() != labels.size()) throw InputError("matrix and label counts differ");
  const auto y = to_bytes(labels);
  if (std::all_of(y.begin(), y.end(), [&](std::uint8_t v) { return v == y.front(); })) {
    std::cerr << "warning: training data contains a single class\n";
  }
  const DnnConfig& cfg = model.config();
  TrainReport report;
  report.initial_loss = dataset_loss(model, xs, labels);
  std::vector<std::size_t> order(xs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  auto params = model.params();
  std::vector<std::vector<double>> velocity;
  for (const auto& p : params) velocity.emplace_back(p.value.size(), 0.0);
  std::size_t batches_seen = 0;
  for (std::uint32_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng(derive_seed(cfg.seed, {0x7a1, epoch}));
    shuffle(order.begin(), order.end(), rng);
    Rng drop_rng(derive_seed(cfg.seed, {0x7a2, epoch}));
    double total = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
      const auto idx = std::span<const std::size_t>(order).subspan(begin, end - begin);
      std::vector<std::uint8_t> batch_labels;
      for (std::size_t i : idx) batch_labels.push_back(y[i]);
      model.zero_grad();
      nn::Tensor input = model.make_batch(gather(xs, idx));
      if (cfg.first_row_dropout > 0.0) {
        for (std::size_t i = 0; i < idx.size(); ++i) {
          if (uniform01(drop_rng) < cfg.first_row_dropout) {
            std::fill_n(input.sample(i).begin(), cfg.input_cols, 0.0);
          }
        }
      }
      const nn::Tensor logits = model.forward(input, nn::Phase::Training);
      nn::Tensor grad;
      total += nn::softmax_cross_entropy(logits, batch_labels, &grad) * static_cast<double>(idx.size());
      model.backward(grad);
      double step = cfg.learning_rate;
      ++batches_seen;
      if (batches_seen <= cfg.warmup_batches) {
        step *= static_cast<double>(batches_seen) / static_cast<double>(cfg.warmup_batches + 1);
      }
      if (cfg.grad_clip > 0.0) {
        double sq = 0.0;
        for (const auto& p : params) {
          for (double g : p.grad) sq += g * g;
        }
        const double norm = std::sqrt(sq);
        if (norm > cfg.grad_clip) step *= cfg.grad_clip / norm;
      }
      for (std::size_t j = 0; j < params.size(); ++j) {
        auto& p = params[j];
        auto& vel = velocity[j];
        for (std::size_t k = 0; k < p.value.size(); ++k) {
          vel[k] = cfg.momentum * vel[k] - step * p.grad[k];
          p.value[k] += vel[k];
        }
      }
    }
    const double mean = total / static_cast<double>(xs.size());
    if (!std::isfinite(mean)) throw Error("DNN training diverged in epoch " + std::to_string(epoch));
    report.epoch_loss.push_back(mean);
    if (on_epoch) on_epoch(epoch, mean);
  }
  return report;
}

GradCheckReport grad_check(DnnModel& model, const ReprMatrix& x, Label label, double eps, std::size_t per_kind,
                           std::uint64_t seed) {
  const nn::Tensor batch = model.make_batch(std::span<const ReprMatrix>(&x, 1));
  const std::uint8_t y[1] = {static_cast<std::uint8_t>(label)};
  auto loss_at = [&]() {
    return nn::softmax_cross_entropy(model.forward(batch, nn::Phase::Probe), y, nullptr);
  };

  model.zero_grad();
  nn::Tensor grad;
  nn::softmax_cross_entropy(model.forward(batch, nn::Phase::Probe), y, &grad);
  model.backward(grad);
  const auto baseline = model.kink_signature();

  auto params = model.params();
  std::map<std::string, std::vector<std::pair<std::size_t, std::size_t>>> by_kind;
  for (std::size_t p = 0; p < params.size(); ++p) {
    for (std::size_t e = 0; e < params[p].value.size(); ++e) by_kind[params[p].kind].emplace_back(p, e);
  }

  GradCheckReport report;
  Rng rng(derive_seed(seed, {0x9c}));
  for (auto& [kind, entries] : by_kind) {
    shuffle(entries.begin(), entries.end(), rng);
    double worst = 0.0;
    std::size_t checked = 0;
    for (std::size_t i = 0; i < entries.size() && checked < per_kind; ++i) {
      const auto [p, e] = entries[i];
      double& value = params[p].value[e];
      const double analytic = params[p].grad[e];
      const double saved = value;
      // A probe that crosses a ReLU or max-pool switch is retried with a
      // shorter step before the parameter is given up on.
      double step = eps, plus = 0.0, minus = 0.0;
      bool smooth = false;
      for (int attempt = 0; attempt < 3 && !smooth; ++attempt, step /= 4.0) {
        value = saved + step;
        plus = loss_at();
        const bool plus_ok = model.kink_signature() == baseline;
        value = saved - step;
        minus = loss_at();
        smooth = plus_ok && model.kink_signature() == baseline;
        value = saved;
        if (smooth) break;
      }
      if (!smooth) {
        ++report.skipped_at_kinks;
        continue;
      }
      const double numeric = (plus - minus) / (2.0 * step);
      const double err = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
      worst = std::max(worst, err);
      ++checked;
    }
    report.max_error_by_kind[kind] = worst;
    report.checked_by_kind[kind] = checked;
    report.max_relative_error = std::max(report.max_relative_error, worst);
  }
  return report;
}

}  // namespace aidroid
