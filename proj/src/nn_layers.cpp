#include "aidroid/nn_layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Core>

#include "aidroid/error.hpp"

namespace aidroid::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

void require_shape(const Tensor& x, const Shape& expected, const std::string& who) {
  if (!(x.shape == expected)) {
    throw ShapeError(who + ": expected input " + to_string(expected) + ", got " + to_string(x.shape));
  }
}

std::uint64_t fnv1a(const void* data, std::size_t bytes) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < bytes; ++i) h = (h ^ p[i]) * 0x100000001b3ULL;
  return h;
}

}  // namespace

std::string to_string(const Shape& s) {
  return "(" + std::to_string(s.c) + "," + std::to_string(s.h) + "," + std::to_string(s.w) + ")";
}

// ---------------------------------------------------------------- Conv2D

Conv2D::Conv2D(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, std::size_t stride, bool bias)
    : in_c_(in_channels), out_c_(out_channels), k_(kernel), stride_(stride), pad_(kernel / 2), has_bias_(bias) {
  if (in_c_ == 0 || out_c_ == 0 || k_ == 0 || stride_ == 0) throw ShapeError("conv widths must be >= 1");
  weights_.assign(out_c_ * in_c_ * k_ * k_, 0.0);
  d_weights_.assign(weights_.size(), 0.0);
  if (has_bias_) {
    bias_.assign(out_c_, 0.0);
    d_bias_.assign(out_c_, 0.0);
  }
}

std::string Conv2D::name() const {
  return "conv" + std::to_string(k_) + "x" + std::to_string(k_) + "/" + std::to_string(stride_) + "->" +
         std::to_string(out_c_);
}

Shape Conv2D::output_shape(const Shape& in) const {
  if (in.c != in_c_) throw ShapeError(name() + ": expected " + std::to_string(in_c_) + " input channels");
  if (in.h + 2 * pad_ < k_ || in.w + 2 * pad_ < k_) throw ShapeError(name() + ": input smaller than kernel");
  return {out_c_, (in.h + 2 * pad_ - k_) / stride_ + 1, (in.w + 2 * pad_ - k_) / stride_ + 1};
}

void Conv2D::init(Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in_c_ * k_ * k_));
  for (double& w : weights_) w = uniform_real(rng, -limit, limit);
  std::fill(bias_.begin(), bias_.end(), 0.0);
}

std::vector<ParamView> Conv2D::params() {
  std::vector<ParamView> out{{"conv", weights_, d_weights_}};
  if (has_bias_) out.push_back({"conv", bias_, d_bias_});
  return out;
}

void Conv2D::im2col(const double* x, const Shape& in, const Shape& out, double* col) const {
  const std::size_t plane = out.h * out.w;
  for (std::size_t ic = 0; ic < in_c_; ++ic) {
    const double* xc = x + ic * in.h * in.w;
    for (std::size_t ky = 0; ky < k_; ++ky) {
      for (std::size_t kx = 0; kx < k_; ++kx) {
        double* row = col + ((ic * k_ + ky) * k_ + kx) * plane;
        for (std::size_t oy = 0; oy < out.h; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * stride_ + ky) - static_cast<std::ptrdiff_t>(pad_);
          double* dst = row + oy * out.w;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(in.h)) {
            std::fill(dst, dst + out.w, 0.0);
            continue;
          }
          const double* src = xc + static_cast<std::size_t>(iy) * in.w;
          for (std::size_t ox = 0; ox < out.w; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * stride_ + kx) - static_cast<std::ptrdiff_t>(pad_);
            dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(in.w)) ? 0.0 : src[ix];
          }
        }
      }
    }
  }
}

void Conv2D::col2im(const double* col, const Shape& in, const Shape& out, double* dx) const {
  const std::size_t plane = out.h * out.w;
  for (std::size_t ic = 0; ic < in_c_; ++ic) {
    double* dxc = dx + ic * in.h * in.w;
    for (std::size_t ky = 0; ky < k_; ++ky) {
      for (std::size_t kx = 0; kx < k_; ++kx) {
        const double* row = col + ((ic * k_ + ky) * k_ + kx) * plane;
        for (std::size_t oy = 0; oy < out.h; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * stride_ + ky) - static_cast<std::ptrdiff_t>(pad_);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(in.h)) continue;
          double* dst = dxc + static_cast<std::size_t>(iy) * in.w;
          const double* src = row + oy * out.w;
          for (std::size_t ox = 0; ox < out.w; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * stride_ + kx) - static_cast<std::ptrdiff_t>(pad_);
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(in.w)) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

Tensor Conv2D::run(const Tensor& x) const {
  const Shape out_shape = output_shape(x.shape);
  Tensor y(x.n, out_shape);
  const std::size_t kdim = in_c_ * k_ * k_;
  const std::size_t plane = out_shape.h * out_shape.w;
  const bool direct = k_ == 1 && stride_ == 1;
  Buffer col(direct ? 0 : kdim * plane);
  ConstMapMat w(weights_.data(), static_cast<Eigen::Index>(out_c_), static_cast<Eigen::Index>(kdim));
  for (std::size_t i = 0; i < x.n; ++i) {
    const double* src = x.sample(i).data();
    if (!direct) {
      im2col(src, x.shape, out_shape, col.data());
      src = col.data();
    }
    ConstMapMat c(src, static_cast<Eigen::Index>(kdim), static_cast<Eigen::Index>(plane));
    MapMat out(y.sample(i).data(), static_cast<Eigen::Index>(out_c_), static_cast<Eigen::Index>(plane));
    out.noalias() = w * c;
    if (has_bias_) {
      for (std::size_t oc = 0; oc < out_c_; ++oc) out.row(static_cast<Eigen::Index>(oc)).array() += bias_[oc];
    }
  }
  return y;
}

Tensor Conv2D::infer(Tensor x) const { return run(x); }

Tensor Conv2D::forward(Tensor x, Phase) {
  input_ = std::move(x);
  return run(input_);
}

Tensor Conv2D::backward(Tensor grad_out) {
  const Shape in_shape = input_.shape;
  const Shape out_shape = output_shape(in_shape);
  require_shape(grad_out, out_shape, name() + " backward");
  Tensor dx(input_.n, in_shape);
  const std::size_t kdim = in_c_ * k_ * k_;
  const std::size_t plane = out_shape.h * out_shape.w;
  const bool direct = k_ == 1 && stride_ == 1;
  Buffer col(direct ? 0 : kdim * plane);
  Buffer dcol(direct ? 0 : kdim * plane);
  const auto rows = static_cast<Eigen::Index>(out_c_);
  const auto kd = static_cast<Eigen::Index>(kdim);
  const auto pl = static_cast<Eigen::Index>(plane);
  ConstMapMat w(weights_.data(), rows, kd);
  MapMat dw(d_weights_.data(), rows, kd);
  for (std::size_t i = 0; i < input_.n; ++i) {
    const double* src = input_.sample(i).data();
    if (!direct) {
      im2col(src, in_shape, out_shape, col.data());
      src = col.data();
    }
    ConstMapMat c(src, kd, pl);
    ConstMapMat g(grad_out.sample(i).data(), rows, pl);
    dw.noalias() += g * c.transpose();
    if (has_bias_) {
      for (std::size_t oc = 0; oc < out_c_; ++oc) d_bias_[oc] += g.row(static_cast<Eigen::Index>(oc)).sum();
    }
    if (direct) {
      MapMat d(dx.sample(i).data(), kd, pl);
      d.noalias() = w.transpose() * g;
    } else {
      MapMat d(dcol.data(), kd, pl);
      d.noalias() = w.transpose() * g;
      col2im(dcol.data(), in_shape, out_shape, dx.sample(i).data());
    }
  }
  return dx;
}

// ---------------------------------------------------------------- BatchNorm2D

BatchNorm2D::BatchNorm2D(std::size_t channels, double eps, double momentum)
    : channels_(channels), eps_(eps), momentum_(momentum) {
  gamma_.assign(channels, 1.0);
  beta_.assign(channels, 0.0);
  d_gamma_.assign(channels, 0.0);
  d_beta_.assign(channels, 0.0);
  running_mean_.assign(channels, 0.0);
  running_var_.assign(channels, 1.0);
}

std::string BatchNorm2D::name() const { return "batchnorm(" + std::to_string(channels_) + ")"; }

void BatchNorm2D::init(Rng&) {
  std::fill(gamma_.begin(), gamma_.end(), 1.0);
  std::fill(beta_.begin(), beta_.end(), 0.0);
  std::fill(running_mean_.begin(), running_mean_.end(), 0.0);
  std::fill(running_var_.begin(), running_var_.end(), 1.0);
}

std::vector<ParamView> BatchNorm2D::params() {
  return {{"batchnorm", gamma_, d_gamma_}, {"batchnorm", beta_, d_beta_}};
}

std::vector<std::span<double>> BatchNorm2D::buffers() { return {running_mean_, running_var_}; }

Tensor BatchNorm2D::infer(Tensor x) const {
  if (x.shape.c != channels_) throw ShapeError(name() + ": channel mismatch");
  const std::size_t plane = x.shape.h * x.shape.w;
  for (std::size_t c = 0; c < channels_; ++c) {
    const double scale = gamma_[c] / std::sqrt(running_var_[c] + eps_);
    const double shift = beta_[c] - running_mean_[c] * scale;
    for (std::size_t i = 0; i < x.n; ++i) {
      double* v = x.channel(i, c);
      for (std::size_t p = 0; p < plane; ++p) v[p] = v[p] * scale + shift;
    }
  }
  return x;
}

Tensor BatchNorm2D::forward(Tensor x, Phase phase) {
  if (x.shape.c != channels_) throw ShapeError(name() + ": channel mismatch");
  phase_ = phase;
  const std::size_t plane = x.shape.h * x.shape.w;
  const double m = static_cast<double>(x.n * plane);
  xhat_.n = x.n;
  xhat_.shape = x.shape;
  xhat_.data.resize(x.data.size());
  inv_std_.assign(channels_, 0.0);
  for (std::size_t c = 0; c < channels_; ++c) {
    double mean, var;
    if (phase == Phase::Inference) {
      mean = running_mean_[c];
      var = running_var_[c];
    } else {
      double sum = 0.0;
      for (std::size_t i = 0; i < x.n; ++i) {
        const double* src = x.channel(i, c);
        for (std::size_t p = 0; p < plane; ++p) sum += src[p];
      }
      mean = sum / m;
      double sq = 0.0;
      for (std::size_t i = 0; i < x.n; ++i) {
        const double* src = x.channel(i, c);
        for (std::size_t p = 0; p < plane; ++p) sq += (src[p] - mean) * (src[p] - mean);
      }
      var = sq / m;
      if (phase == Phase::Training) {
        const double unbiased = m > 1 ? var * m / (m - 1) : var;
        running_mean_[c] = (1 - momentum_) * running_mean_[c] + momentum_ * mean;
        running_var_[c] = (1 - momentum_) * running_var_[c] + momentum_ * unbiased;
      }
    }
    const double inv = 1.0 / std::sqrt(var + eps_);
    inv_std_[c] = inv;
    for (std::size_t i = 0; i < x.n; ++i) {
      double* v = x.channel(i, c);
      double* xh = xhat_.channel(i, c);
      for (std::size_t p = 0; p < plane; ++p) {
        xh[p] = (v[p] - mean) * inv;
        v[p] = gamma_[c] * xh[p] + beta_[c];
      }
    }
  }
  return x;
}

Tensor BatchNorm2D::backward(Tensor grad_out) {
  require_shape(grad_out, xhat_.shape, name() + " backward");
  const std::size_t plane = grad_out.shape.h * grad_out.shape.w;
  const double m = static_cast<double>(grad_out.n * plane);
  for (std::size_t c = 0; c < channels_; ++c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (std::size_t i = 0; i < grad_out.n; ++i) {
      const double* g = grad_out.channel(i, c);
      const double* xh = xhat_.channel(i, c);
      for (std::size_t p = 0; p < plane; ++p) {
        sum_dy += g[p];
        sum_dy_xhat += g[p] * xh[p];
      }
    }
    d_gamma_[c] += sum_dy_xhat;
    d_beta_[c] += sum_dy;
    const double scale = gamma_[c] * inv_std_[c];
    for (std::size_t i = 0; i < grad_out.n; ++i) {
      double* g = grad_out.channel(i, c);
      const double* xh = xhat_.channel(i, c);
      if (phase_ == Phase::Inference) {
        for (std::size_t p = 0; p < plane; ++p) g[p] *= scale;
      } else {
        const double mean_dy = sum_dy / m;
        const double mean_dy_xhat = sum_dy_xhat / m;
        for (std::size_t p = 0; p < plane; ++p) g[p] = scale * (g[p] - mean_dy - xh[p] * mean_dy_xhat);
      }
    }
  }
  return grad_out;
}

// ---------------------------------------------------------------- ReLU

Tensor ReLU::infer(Tensor x) const {
  for (double& v : x.data) v = v > 0.0 ? v : 0.0;
  return x;
}

Tensor ReLU::forward(Tensor x, Phase) {
  mask_.resize(x.data.size());
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    mask_[i] = x.data[i] > 0.0;
    if (!mask_[i]) x.data[i] = 0.0;
  }
  return x;
}

Tensor ReLU::backward(Tensor grad_out) {
  if (grad_out.data.size() != mask_.size()) throw ShapeError("relu backward: size mismatch");
  for (std::size_t i = 0; i < grad_out.data.size(); ++i) {
    if (!mask_[i]) grad_out.data[i] = 0.0;
  }
  return grad_out;
}

void ReLU::kink_signature(std::vector<std::uint64_t>& out) const {
  out.push_back(fnv1a(mask_.data(), mask_.size()));
}

// ---------------------------------------------------------------- MaxPool2D

MaxPool2D::MaxPool2D(std::size_t kernel, std::size_t stride, std::size_t pad) : k_(kernel), stride_(stride), pad_(pad) {
  if (k_ == 0 || stride_ == 0 || pad_ >= k_) throw ShapeError("invalid max-pool geometry");
}

std::string MaxPool2D::name() const {
  return "maxpool" + std::to_string(k_) + "x" + std::to_string(k_) + "/" + std::to_string(stride_);
}

Shape MaxPool2D::output_shape(const Shape& in) const {
  if (in.h + 2 * pad_ < k_ || in.w + 2 * pad_ < k_) throw ShapeError(name() + ": input smaller than window");
  return {in.c, (in.h + 2 * pad_ - k_) / stride_ + 1, (in.w + 2 * pad_ - k_) / stride_ + 1};
}

Tensor MaxPool2D::run(const Tensor& x, std::vector<std::uint32_t>* argmax) const {
  const Shape out = output_shape(x.shape);
  Tensor y(x.n, out);
  if (argmax) argmax->assign(y.data.size(), 0);
  const auto h = static_cast<std::ptrdiff_t>(x.shape.h);
  const auto w = static_cast<std::ptrdiff_t>(x.shape.w);
  std::size_t o = 0;
  for (std::size_t i = 0; i < x.n; ++i) {
    for (std::size_t c = 0; c < x.shape.c; ++c) {
      const double* src = x.channel(i, c);
      for (std::size_t oy = 0; oy < out.h; ++oy) {
        for (std::size_t ox = 0; ox < out.w; ++ox, ++o) {
          double best = -std::numeric_limits<double>::infinity();
          std::uint32_t best_idx = 0;
          const auto y0 = static_cast<std::ptrdiff_t>(oy * stride_) - static_cast<std::ptrdiff_t>(pad_);
          const auto x0 = static_cast<std::ptrdiff_t>(ox * stride_) - static_cast<std::ptrdiff_t>(pad_);
          for (std::ptrdiff_t yy = std::max<std::ptrdiff_t>(y0, 0); yy < std::min(y0 + static_cast<std::ptrdiff_t>(k_), h); ++yy) {
            for (std::ptrdiff_t xx = std::max<std::ptrdiff_t>(x0, 0); xx < std::min(x0 + static_cast<std::ptrdiff_t>(k_), w); ++xx) {
              const double v = src[yy * w + xx];
              if (v > best) {
                best = v;
                best_idx = static_cast<std::uint32_t>(yy * w + xx);
              }
            }
          }
          y.data[o] = best;
          if (argmax) (*argmax)[o] = best_idx;
        }
      }
    }
  }
  return y;
}

Tensor MaxPool2D::infer(Tensor x) const { return run(x, nullptr); }

Tensor MaxPool2D::forward(Tensor x, Phase) {
  in_shape_ = x.shape;
  return run(x, &argmax_);
}

Tensor MaxPool2D::backward(Tensor grad_out) {
  require_shape(grad_out, output_shape(in_shape_), name() + " backward");
  Tensor dx(grad_out.n, in_shape_);
  const std::size_t out_plane = grad_out.shape.h * grad_out.shape.w;
  std::size_t o = 0;
  for (std::size_t i = 0; i < grad_out.n; ++i) {
    for (std::size_t c = 0; c < in_shape_.c; ++c) {
      double* d = dx.channel(i, c);
      for (std::size_t p = 0; p < out_plane; ++p, ++o) d[argmax_[o]] += grad_out.data[o];
    }
  }
  return dx;
}

void MaxPool2D::kink_signature(std::vector<std::uint64_t>& out) const {
  out.push_back(fnv1a(argmax_.data(), argmax_.size() * sizeof(std::uint32_t)));
}

// ---------------------------------------------------------------- GlobalMaxPool

Tensor GlobalMaxPool::run(const Tensor& x, std::vector<std::uint32_t>* argmax) const {
  Tensor y(x.n, output_shape(x.shape));
  if (argmax) argmax->assign(y.data.size(), 0);
  const std::size_t plane = x.shape.h * x.shape.w;
  for (std::size_t i = 0; i < x.n; ++i) {
    for (std::size_t c = 0; c < x.shape.c; ++c) {
      const double* src = x.channel(i, c);
      const std::size_t best = static_cast<std::size_t>(std::max_element(src, src + plane) - src);
      y.data[i * x.shape.c + c] = src[best];
      if (argmax) (*argmax)[i * x.shape.c + c] = static_cast<std::uint32_t>(best);
    }
  }
  return y;
}

Tensor GlobalMaxPool::infer(Tensor x) const { return run(x, nullptr); }

Tensor GlobalMaxPool::forward(Tensor x, Phase) {
  in_shape_ = x.shape;
  return run(x, &argmax_);
}

Tensor GlobalMaxPool::backward(Tensor grad_out) {
  require_shape(grad_out, output_shape(in_shape_), "global_maxpool backward");
  Tensor dx(grad_out.n, in_shape_);
  for (std::size_t i = 0; i < grad_out.n; ++i) {
    for (std::size_t c = 0; c < in_shape_.c; ++c) {
      dx.channel(i, c)[argmax_[i * in_shape_.c + c]] = grad_out.data[i * in_shape_.c + c];
    }
  }
  return dx;
}

void GlobalMaxPool::kink_signature(std::vector<std::uint64_t>& out) const {
  out.push_back(fnv1a(argmax_.data(), argmax_.size() * sizeof(std::uint32_t)));
}

// ---------------------------------------------------------------- Dense

Dense::Dense(std::size_t in_features, std::size_t out_features) : in_(in_features), out_(out_features) {
  if (in_ == 0 || out_ == 0) throw ShapeError("dense widths must be >= 1");
  weights_.assign(out_ * in_, 0.0);
  d_weights_.assign(weights_.size(), 0.0);
  bias_.assign(out_, 0.0);
  d_bias_.assign(out_, 0.0);
}

std::string Dense::name() const { return "dense" + std::to_string(in_) + "->" + std::to_string(out_); }

Shape Dense::output_shape(const Shape& in) const {
  if (in.size() != in_) throw ShapeError(name() + ": expected " + std::to_string(in_) + " inputs");
  return {out_, 1, 1};
}

void Dense::init(Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in_ + out_));
  for (double& w : weights_) w = uniform_real(rng, -limit, limit);
  std::fill(bias_.begin(), bias_.end(), 0.0);
}

std::vector<ParamView> Dense::params() { return {{"dense", weights_, d_weights_}, {"dense", bias_, d_bias_}}; }

Tensor Dense::infer(Tensor x) const {
  Tensor y(x.n, output_shape(x.shape));
  ConstMapMat in(x.data.data(), static_cast<Eigen::Index>(x.n), static_cast<Eigen::Index>(in_));
  ConstMapMat w(weights_.data(), static_cast<Eigen::Index>(out_), static_cast<Eigen::Index>(in_));
  MapMat out(y.data.data(), static_cast<Eigen::Index>(x.n), static_cast<Eigen::Index>(out_));
  out.noalias() = in * w.transpose();
  for (std::size_t i = 0; i < x.n; ++i) {
    for (std::size_t o = 0; o < out_; ++o) y.data[i * out_ + o] += bias_[o];
  }
  return y;
}

Tensor Dense::forward(Tensor x, Phase) {
  input_ = std::move(x);
  return infer(input_);
}

Tensor Dense::backward(Tensor grad_out) {
  require_shape(grad_out, Shape{out_, 1, 1}, name() + " backward");
  const auto n = static_cast<Eigen::Index>(input_.n);
  ConstMapMat in(input_.data.data(), n, static_cast<Eigen::Index>(in_));
  ConstMapMat g(grad_out.data.data(), n, static_cast<Eigen::Index>(out_));
  ConstMapMat w(weights_.data(), static_cast<Eigen::Index>(out_), static_cast<Eigen::Index>(in_));
  MapMat dw(d_weights_.data(), static_cast<Eigen::Index>(out_), static_cast<Eigen::Index>(in_));
  dw.noalias() += g.transpose() * in;
  for (std::size_t i = 0; i < input_.n; ++i) {
    for (std::size_t o = 0; o < out_; ++o) d_bias_[o] += grad_out.data[i * out_ + o];
  }
  Tensor dx(input_.n, input_.shape);
  MapMat d(dx.data.data(), n, static_cast<Eigen::Index>(in_));
  d.noalias() = g * w;
  return dx;
}

// ---------------------------------------------------------------- Sequential

Shape Sequential::output_shape(const Shape& in) const {
  Shape s = in;
  for (const auto& l : layers_) s = l->output_shape(s);
  return s;
}

Tensor Sequential::infer(Tensor x) const {
  for (const auto& l : layers_) x = l->infer(std::move(x));
  return x;
}

Tensor Sequential::forward(Tensor x, Phase phase) {
  for (auto& l : layers_) x = l->forward(std::move(x), phase);
  return x;
}

Tensor Sequential::backward(Tensor grad_out) {
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) grad_out = (*it)->backward(std::move(grad_out));
  return grad_out;
}

std::vector<ParamView> Sequential::params() {
  std::vector<ParamView> out;
  for (auto& l : layers_) {
    auto p = l->params();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

std::vector<std::span<double>> Sequential::buffers() {
  std::vector<std::span<double>> out;
  for (auto& l : layers_) {
    auto b = l->buffers();
    out.insert(out.end(), b.begin(), b.end());
  }
  return out;
}

void Sequential::init(Rng& rng) {
  for (auto& l : layers_) l->init(rng);
}

void Sequential::kink_signature(std::vector<std::uint64_t>& out) const {
  for (const auto& l : layers_) l->kink_signature(out);
}

// ---------------------------------------------------------------- Inception

Shape Inception::output_shape(const Shape& in) const {
  Shape out{0, 0, 0};
  for (const auto& b : branches_) {
    const Shape s = b.output_shape(in);
    if (out.c == 0) {
      out.h = s.h;
      out.w = s.w;
    } else if (s.h != out.h || s.w != out.w) {
      throw ShapeError("inception branches disagree on spatial size");
    }
    out.c += s.c;
  }
  return out;
}

Tensor Inception::concat(std::vector<Tensor> parts) const {
  Shape out{0, parts.front().shape.h, parts.front().shape.w};
  for (const auto& p : parts) out.c += p.shape.c;
  const std::size_t n = parts.front().n;
  Tensor y(n, out);
  for (std::size_t i = 0; i < n; ++i) {
    double* dst = y.sample(i).data();
    for (const auto& p : parts) {
      const auto src = p.sample(i);
      dst = std::copy(src.begin(), src.end(), dst);
    }
  }
  return y;
}

Tensor Inception::infer(Tensor x) const {
  std::vector<Tensor> parts;
  for (const auto& b : branches_) parts.push_back(b.infer(x));
  return concat(std::move(parts));
}

Tensor Inception::forward(Tensor x, Phase phase) {
  in_shape_ = x.shape;
  std::vector<Tensor> parts;
  branch_channels_.clear();
  for (std::size_t b = 0; b < branches_.size(); ++b) {
    parts.push_back(b + 1 < branches_.size() ? branches_[b].forward(x, phase) : branches_[b].forward(std::move(x), phase));
    branch_channels_.push_back(parts.back().shape.c);
  }
  return concat(std::move(parts));
}

Tensor Inception::backward(Tensor grad_out) {
  require_shape(grad_out, output_shape(in_shape_), "inception backward");
  Tensor dx(grad_out.n, in_shape_);
  const std::size_t plane = grad_out.shape.h * grad_out.shape.w;
  std::size_t channel_offset = 0;
  for (std::size_t b = 0; b < branches_.size(); ++b) {
    Tensor g(grad_out.n, Shape{branch_channels_[b], grad_out.shape.h, grad_out.shape.w});
    for (std::size_t i = 0; i < grad_out.n; ++i) {
      const double* src = grad_out.channel(i, channel_offset);
      std::copy(src, src + branch_channels_[b] * plane, g.sample(i).data());
    }
    const Tensor d = branches_[b].backward(std::move(g));
    for (std::size_t k = 0; k < dx.data.size(); ++k) dx.data[k] += d.data[k];
    channel_offset += branch_channels_[b];
  }
  return dx;
}

std::vector<ParamView> Inception::params() {
  std::vector<ParamView> out;
  for (auto& b : branches_) {
    auto p = b.params();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

std::vector<std::span<double>> Inception::buffers() {
  std::vector<std::span<double>> out;
  for (auto& b : branches_) {
    auto p = b.buffers();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

void Inception::init(Rng& rng) {
  for (auto& b : branches_) b.init(rng);
}

void Inception::kink_signature(std::vector<std::uint64_t>& out) const {
  for (const auto& b : branches_) b.kink_signature(out);
}

// ---------------------------------------------------------------- loss

std::vector<double> softmax(std::span<const double> logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) sum += (p[k] = std::exp(logits[k] - mx));
  for (double& v : p) v /= sum;
  return p;
}

double softmax_cross_entropy(const Tensor& logits, std::span<const std::uint8_t> labels, Tensor* grad) {
  const std::size_t k = logits.shape.size();
  if (labels.size() != logits.n) throw ShapeError("label count does not match batch size");
  if (grad) *grad = Tensor(logits.n, logits.shape);
  double loss = 0.0;
  const double inv_n = 1.0 / static_cast<double>(logits.n);
  for (std::size_t i = 0; i < logits.n; ++i) {
    const auto z = logits.sample(i);
    const double mx = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double v : z) sum += std::exp(v - mx);
    const double log_norm = mx + std::log(sum);
    loss += log_norm - z[labels[i]];
    if (grad) {
      auto g = grad->sample(i);
      for (std::size_t c = 0; c < k; ++c) g[c] = (std::exp(z[c] - log_norm) - (c == labels[i] ? 1.0 : 0.0)) * inv_n;
    }
  }
  return loss * inv_n;
}

}  // namespace aidroid::nn
