#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "aidroid/dataset.hpp"
#include "aidroid/hin2img.hpp"
#include "aidroid/nn_layers.hpp"

namespace aidroid {

struct ConvSpec {
  std::uint32_t filters = 32;
  std::uint32_t kernel = 3;
  std::uint32_t stride = 1;
};

// Branch widths of the Inception block: [1x1], [1x1 -> 3x3], [1x1 -> 5x5],
// [3x3 maxpool -> 1x1].
struct InceptionSpec {
  std::uint32_t b1 = 16;
  std::uint32_t b3_reduce = 16;
  std::uint32_t b3 = 32;
  std::uint32_t b5_reduce = 8;
  std::uint32_t b5 = 16;
  std::uint32_t pool_proj = 16;

  std::uint32_t output_channels() const { return b1 + b3 + b5 + pool_proj; }
};

struct DnnConfig {
  std::uint32_t input_rows = 64;  // t
  std::uint32_t input_cols = 64;  // d
  // Each stem entry is conv -> [batchnorm] -> ReLU -> maxpool(stem_pool).
  std::vector<ConvSpec> stem = {{32, 3, 1}, {64, 3, 1}};
  bool stem_batchnorm = true;
  std::uint32_t stem_pool = 2;  // <= 1 disables the pooling
  bool use_inception = true;
  InceptionSpec inception;
  bool global_pool = true;
  std::uint32_t outputs = 2;

  double bn_eps = 1e-8;
  double bn_momentum = 0.1;

  double learning_rate = 0.01;
  double momentum = 0.9;  // heavy-ball; 0 gives plain SGD
  double grad_clip = 0.0; // max global L2 norm of a batch gradient; 0 disables
  std::uint32_t batch_size = 32;
  std::uint32_t warmup_batches = 25;  // learning rate ramps up linearly over these
  std::uint32_t epochs = 4;
  // Probability that a training sample is fed with its first input row set
  // to zero. Inference inputs are never altered.
  double first_row_dropout = 0.0;
  std::uint64_t seed = 1;

  void validate() const;

  // Classifier head only: flatten -> dense -> softmax.
  static DnnConfig dense_only(std::uint32_t rows, std::uint32_t cols);
};

void to_json(nlohmann::json& j, const DnnConfig& c);
void from_json(const nlohmann::json& j, DnnConfig& c);

struct Prediction {
  Label label = Label::Benign;
  std::array<double, 2> probabilities{0.5, 0.5};

  double score() const { return probabilities[1]; }
};

class DnnModel {
 public:
  // Builds the architecture, initializes parameters from cfg.seed and checks
  // every layer's declared output shape against a real forward pass.
  explicit DnnModel(const DnnConfig& cfg);

  DnnModel(const DnnModel&) = delete;
  DnnModel& operator=(const DnnModel&) = delete;
  DnnModel(DnnModel&&) = default;
  DnnModel& operator=(DnnModel&&) = default;

  const DnnConfig& config() const { return config_; }
  const nn::Sequential& network() const { return net_; }
  nn::Shape input_shape() const { return {1, config_.input_rows, config_.input_cols}; }

  // Inference (running statistics), no caching; safe to share across threads.
  Prediction predict(const ReprMatrix& x) const;
  std::vector<Prediction> predict(std::span<const ReprMatrix> xs) const;

  nn::Tensor forward(const nn::Tensor& batch, nn::Phase phase) { return net_.forward(batch, phase); }
  void backward(const nn::Tensor& grad_logits) { net_.backward(grad_logits); }
  std::vector<nn::ParamView> params() { return net_.params(); }
  std::vector<std::span<double>> buffers() { return net_.buffers(); }
  void zero_grad();
  std::vector<std::uint64_t> kink_signature() const;

  // Architecture as JSON (layer names and shapes), for persistence and logs.
  nlohmann::json describe() const;

  nn::Tensor make_batch(std::span<const ReprMatrix> xs) const;

  void save(std::ostream& out) const;
  void save(const std::string& path) const;
  static DnnModel load(std::istream& in);
  static DnnModel load(const std::string& path);

 private:
  DnnConfig config_;
  nn::Sequential net_;
};

struct TrainingSample {
  const ReprMatrix* matrix;
  Label label;
};

struct TrainReport {
  double initial_loss = 0.0;
  std::vector<double> epoch_loss;  // mean loss seen during each epoch
};

// Mini-batch SGD (optionally with momentum) on softmax cross-entropy with a
// seeded shuffle per epoch.
// A single-class dataset only logs a warning.
TrainReport train(DnnModel& model, std::span<const ReprMatrix> xs, std::span<const Label> labels,
                  const std::function<void(std::size_t, double)>& on_epoch = {});

// Mean cross-entropy over the data in batches, normalizing with batch
// statistics but leaving the running statistics untouched.
double dataset_loss(DnnModel& model, std::span<const ReprMatrix> xs, std::span<const Label> labels);

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::map<std::string, double> max_error_by_kind;
  std::map<std::string, std::size_t> checked_by_kind;
  std::size_t skipped_at_kinks = 0;
};

// Compares backprop gradients of the single-sample loss (batch statistics,
// running statistics frozen) with central differences for `per_kind`
// randomly chosen parameters of each layer kind (all of them if the kind
// has fewer). Parameters whose
// +-eps probes change a ReLU mask or a pooling argmax sit on a kink and are
// skipped. The error is |a - n| / max(|a|, |n|, 1e-6).
GradCheckReport grad_check(DnnModel& model, const ReprMatrix& x, Label label, double eps,
                           std::size_t per_kind = 200, std::uint64_t seed = 0);

}  // namespace aidroid
