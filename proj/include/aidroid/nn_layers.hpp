#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <new>
#include <span>
#include <string>
#include <vector>

#include "aidroid/random.hpp"

namespace aidroid::nn {

struct Shape {
  std::size_t c = 0, h = 0, w = 0;
  std::size_t size() const { return c * h * w; }
  bool operator==(const Shape&) const = default;
};

std::string to_string(const Shape& s);

// Vectorized kernels pick their summation order from the data address, so
// buffers are over-aligned to keep repeated runs bit-identical.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t alignment{64};
  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}
  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), alignment)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, alignment); }
  template <class U>
  bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

using Buffer = std::vector<double, AlignedAllocator<double>>;

// Batch of N samples in NCHW order.
struct Tensor {
  std::size_t n = 0;
  Shape shape;
  Buffer data;

  Tensor() = default;
  Tensor(std::size_t n_, Shape s) : n(n_), shape(s), data(n_ * s.size(), 0.0) {}

  std::span<double> sample(std::size_t i) { return std::span<double>(data).subspan(i * shape.size(), shape.size()); }
  std::span<const double> sample(std::size_t i) const {
    return std::span<const double>(data).subspan(i * shape.size(), shape.size());
  }
  double* channel(std::size_t i, std::size_t ch) { return data.data() + i * shape.size() + ch * shape.h * shape.w; }
  const double* channel(std::size_t i, std::size_t ch) const {
    return data.data() + i * shape.size() + ch * shape.h * shape.w;
  }
};

// Inference uses running statistics. Training normalizes with batch
// statistics and updates the running ones; Probe normalizes like Training
// but leaves the running statistics alone (used by gradient checks).
enum class Phase { Inference, Training, Probe };

struct ParamView {
  std::string kind;  // "conv", "batchnorm" or "dense"
  std::span<double> value;
  std::span<double> grad;
};

class Layer {
 public:
  virtual ~Layer() = default;

  virtual std::string name() const = 0;
  virtual Shape output_shape(const Shape& in) const = 0;

  // Tensors are passed by value so layers can work in place.
  // Stateless forward pass, safe to call concurrently on a frozen layer.
  virtual Tensor infer(Tensor x) const = 0;
  // Forward pass that caches what backward() needs.
  virtual Tensor forward(Tensor x, Phase phase) = 0;
  // Accumulates parameter gradients and returns dL/dx.
  virtual Tensor backward(Tensor grad_out) = 0;

  virtual std::vector<ParamView> params() { return {}; }
  // Non-trainable persistent state (batch-norm running statistics).
  virtual std::vector<std::span<double>> buffers() { return {}; }
  virtual void init(Rng&) {}
  // Discrete choices made by the last forward() (ReLU masks, pooling
  // argmaxes). A finite-difference probe that changes this crossed a kink.
  virtual void kink_signature(std::vector<std::uint64_t>&) const {}
};

using LayerPtr = std::unique_ptr<Layer>;

class Conv2D : public Layer {
 public:
  Conv2D(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, std::size_t stride, bool bias);

  std::string name() const override;
  Shape output_shape(const Shape& in) const override;
  Tensor infer(Tensor x) const override;
  Tensor forward(Tensor x, Phase phase) override;
  Tensor backward(Tensor grad_out) override;
  std::vector<ParamView> params() override;
  void init(Rng& rng) override;

  std::span<double> weights() { return weights_; }

 private:
  void im2col(const double* x, const Shape& in, const Shape& out, double* col) const;
  void col2im(const double* col, const Shape& in, const Shape& out, double* dx) const;
  Tensor run(const Tensor& x) const;

  std::size_t in_c_, out_c_, k_, stride_, pad_;
  bool has_bias_;
  Buffer weights_, bias_, d_weights_, d_bias_;
  Tensor input_;
};

class BatchNorm2D : public Layer {
 public:
  BatchNorm2D(std::size_t channels, double eps, double momentum);

  std::string name() const override;
  Shape output_shape(const Shape& in) const override { return in; }
  Tensor infer(Tensor x) const override;
  Tensor forward(Tensor x, Phase phase) override;
  Tensor backward(Tensor grad_out) override;
  std::vector<ParamView> params() override;
  std::vector<std::span<double>> buffers() override;
  void init(Rng&) override;

 private:
  std::size_t channels_;
  double eps_, momentum_;
  Buffer gamma_, beta_, d_gamma_, d_beta_;
  std::vector<double> running_mean_, running_var_;
  Phase phase_ = Phase::Inference;
  Tensor xhat_;
  std::vector<double> inv_std_;
};

class ReLU : public Layer {
 public:
  std::string name() const override { return "relu"; }
  Shape output_shape(const Shape& in) const override { return in; }
  Tensor infer(Tensor x) const override;
  Tensor forward(Tensor x, Phase phase) override;
  Tensor backward(Tensor grad_out) override;
  void kink_signature(std::vector<std::uint64_t>& out) const override;

 private:
  std::vector<std::uint8_t> mask_;
};

// Max pooling with -inf padding; ties go to the first maximum in scan order.
class MaxPool2D : public Layer {
 public:
  MaxPool2D(std::size_t kernel, std::size_t stride, std::size_t pad);

  std::string name() const override;
  Shape output_shape(const Shape& in) const override;
  Tensor infer(Tensor x) const override;
  Tensor forward(Tensor x, Phase phase) override;
  Tensor backward(Tensor grad_out) override;
  void kink_signature(std::vector<std::uint64_t>& out) const override;

 private:
  Tensor run(const Tensor& x, std::vector<std::uint32_t>* argmax) const;

  std::size_t k_, stride_, pad_;
  Shape in_shape_;
  std::vector<std::uint32_t> argmax_;
};

// Max over each channel's spatial extent; output shape (C, 1, 1).
class GlobalMaxPool : public Layer {
 public:
  std::string name() const override { return "global_maxpool"; }
  Shape output_shape(const Shape& in) const override { return {in.c, 1, 1}; }
  Tensor infer(Tensor x) const override;
  Tensor forward(Tensor x, Phase phase) override;
  Tensor backward(Tensor grad_out) override;
  void kink_signature(std::vector<std::uint64_t>& out) const override;

 private:
  Tensor run(const Tensor& x, std::vector<std::uint32_t>* argmax) const;

  Shape in_shape_;
  std::vector<std::uint32_t> argmax_;
};

// Fully connected on the flattened sample; output shape (out, 1, 1).
class Dense : public Layer {
 public:
  Dense(std::size_t in_features, std::size_t out_features);

  std::string name() const override;
  Shape output_shape(const Shape& in) const override;
  Tensor infer(Tensor x) const override;
  Tensor forward(Tensor x, Phase phase) override;
  Tensor backward(Tensor grad_out) override;
  std::vector<ParamView> params() override;
  void init(Rng& rng) override;

 private:
  std::size_t in_, out_;
  Buffer weights_, bias_, d_weights_, d_bias_;
  Tensor input_;
};

class Sequential : public Layer {
 public:
  Sequential() = default;
  explicit Sequential(std::vector<LayerPtr> layers) : layers_(std::move(layers)) {}

  void add(LayerPtr layer) { layers_.push_back(std::move(layer)); }
  const std::vector<LayerPtr>& layers() const { return layers_; }

  std::string name() const override { return "sequential"; }
  Shape output_shape(const Shape& in) const override;
  Tensor infer(Tensor x) const override;
  Tensor forward(Tensor x, Phase phase) override;
  Tensor backward(Tensor grad_out) override;
  std::vector<ParamView> params() override;
  std::vector<std::span<double>> buffers() override;
  void init(Rng& rng) override;
  void kink_signature(std::vector<std::uint64_t>& out) const override;

 private:
  std::vector<LayerPtr> layers_;
};

// Parallel branches over the same input, concatenated along channels.
class Inception : public Layer {
 public:
  explicit Inception(std::vector<Sequential> branches) : branches_(std::move(branches)) {}

  std::string name() const override { return "inception"; }
  Shape output_shape(const Shape& in) const override;
  Tensor infer(Tensor x) const override;
  Tensor forward(Tensor x, Phase phase) override;
  Tensor backward(Tensor grad_out) override;
  std::vector<ParamView> params() override;
  std::vector<std::span<double>> buffers() override;
  void init(Rng& rng) override;
  void kink_signature(std::vector<std::uint64_t>& out) const override;

  const std::vector<Sequential>& branches() const { return branches_; }

 private:
  Tensor concat(std::vector<Tensor> parts) const;

  std::vector<Sequential> branches_;
  std::vector<std::size_t> branch_channels_;
  Shape in_shape_;
};

// Mean softmax cross-entropy over the batch for logits of shape (K, 1, 1);
// writes dL/dlogits into grad when given.
double softmax_cross_entropy(const Tensor& logits, std::span<const std::uint8_t> labels, Tensor* grad);

std::vector<double> softmax(std::span<const double> logits);

}  // namespace aidroid::nn
