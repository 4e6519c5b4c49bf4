#include <gtest/gtest.h>

#include <cmath>

#include "aidroid/nn_layers.hpp"

namespace aidroid::nn {
namespace {

Tensor random_tensor(std::size_t n, Shape s, Rng& rng) {
  Tensor t(n, s);
  for (double& x : t.data) x = uniform_real(rng, -1.0, 1.0);
  return t;
}

double dot(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) s += a.data[i] * b.data[i];
  return s;
}

// Checks dL/dx and dL/dparams of L = <layer(x), r> against central
// differences. Returns the largest relative error seen.
double check_layer(Layer& layer, const Tensor& x, Rng& rng, double eps = 1e-6) {
  const Shape out_shape = layer.output_shape(x.shape);
  const Tensor r = random_tensor(x.n, out_shape, rng);
  for (auto& p : layer.params()) std::fill(p.grad.begin(), p.grad.end(), 0.0);
  const Tensor y = layer.forward(x, Phase::Probe);
  EXPECT_EQ(y.shape, out_shape);
  const Tensor dx = layer.backward(r);
  auto loss = [&](const Tensor& in) { return dot(layer.forward(in, Phase::Probe), r); };

  double worst = 0.0;
  auto rel = [](double a, double n) { return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-6}); };
  for (std::size_t k = 0; k < std::min<std::size_t>(x.data.size(), 40); ++k) {
    const std::size_t i = uniform_index(rng, x.data.size());
    Tensor xp = x, xm = x;
    xp.data[i] += eps;
    xm.data[i] -= eps;
    worst = std::max(worst, rel(dx.data[i], (loss(xp) - loss(xm)) / (2 * eps)));
  }
  for (auto& p : layer.params()) {
    const std::vector<double> analytic(p.grad.begin(), p.grad.end());
    for (std::size_t k = 0; k < std::min<std::size_t>(p.value.size(), 20); ++k) {
      const std::size_t i = uniform_index(rng, p.value.size());
      const double v0 = p.value[i];
      p.value[i] = v0 + eps;
      const double lp = loss(x);
      p.value[i] = v0 - eps;
      const double lm = loss(x);
      p.value[i] = v0;
      worst = std::max(worst, rel(analytic[i], (lp - lm) / (2 * eps)));
    }
  }
  return worst;
}

TEST(Layers, ConvGradients) {
  Rng rng(1);
  for (auto [k, stride, bias] : {std::tuple{3, 1, false}, std::tuple{5, 1, true}, std::tuple{3, 2, true},
                                 std::tuple{1, 1, false}}) {
    Conv2D conv(3, 4, k, stride, bias);
    conv.init(rng);
    EXPECT_LT(check_layer(conv, random_tensor(2, {3, 7, 6}, rng), rng), 1e-6) << "k=" << k << " s=" << stride;
  }
}

TEST(Layers, ConvMatchesDirectConvolution) {
  Rng rng(2);
  Conv2D conv(2, 3, 3, 1, false);
  conv.init(rng);
  const Tensor x = random_tensor(1, {2, 5, 4}, rng);
  const Tensor y = conv.infer(x);
  ASSERT_EQ(y.shape, (Shape{3, 5, 4}));
  const auto w = conv.weights();  // (out, in, k, k)
  for (std::size_t o = 0; o < 3; ++o)
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < 4; ++j) {
        double s = 0.0;
        for (std::size_t c = 0; c < 2; ++c)
          for (int di = -1; di <= 1; ++di)
            for (int dj = -1; dj <= 1; ++dj) {
              const int ii = static_cast<int>(i) + di, jj = static_cast<int>(j) + dj;
              if (ii < 0 || jj < 0 || ii >= 5 || jj >= 4) continue;
              s += w[((o * 2 + c) * 3 + (di + 1)) * 3 + (dj + 1)] * x.channel(0, c)[ii * 4 + jj];
            }
        EXPECT_NEAR(y.channel(0, o)[i * 4 + j], s, 1e-12);
      }
}

TEST(Layers, BatchNormGradientsAndStatistics) {
  Rng rng(3);
  BatchNorm2D bn(3, 1e-8, 0.1);
  bn.init(rng);
  Tensor x = random_tensor(4, {3, 3, 3}, rng);
  for (double& v : x.data) v = 5.0 + 3.0 * v;
  EXPECT_LT(check_layer(bn, x, rng, 1e-5), 1e-5);

  BatchNorm2D fresh(3, 1e-8, 0.1);
  fresh.init(rng);
  const Tensor y = fresh.forward(x, Phase::Training);
  for (std::size_t c = 0; c < 3; ++c) {
    double mean = 0.0, sq = 0.0;
    std::size_t n = 0;
    for (std::size_t s = 0; s < y.n; ++s)
      for (std::size_t i = 0; i < 9; ++i) {
        const double v = y.channel(s, c)[i];
        mean += v;
        sq += v * v;
        ++n;
      }
    mean /= n;
    EXPECT_LT(std::abs(mean), 1e-6);
    EXPECT_NEAR(sq / n - mean * mean, 1.0, 1e-6);
  }
}

TEST(Layers, BatchNormProbeLeavesRunningStatistics) {
  Rng rng(4);
  BatchNorm2D bn(2, 1e-8, 0.1);
  bn.init(rng);
  const auto before = std::vector<double>(bn.buffers()[0].begin(), bn.buffers()[0].end());
  bn.forward(random_tensor(3, {2, 2, 2}, rng), Phase::Probe);
  EXPECT_EQ(std::vector<double>(bn.buffers()[0].begin(), bn.buffers()[0].end()), before);
  bn.forward(random_tensor(3, {2, 2, 2}, rng), Phase::Training);
  EXPECT_NE(std::vector<double>(bn.buffers()[0].begin(), bn.buffers()[0].end()), before);
}

TEST(Layers, DenseAndPoolingGradients) {
  Rng rng(5);
  Dense dense(12, 3);
  dense.init(rng);
  EXPECT_LT(check_layer(dense, random_tensor(3, {3, 2, 2}, rng), rng), 1e-7);
  MaxPool2D pool(2, 2, 0);
  EXPECT_LT(check_layer(pool, random_tensor(2, {2, 6, 5}, rng), rng), 1e-6);
  MaxPool2D same(3, 1, 1);
  EXPECT_LT(check_layer(same, random_tensor(2, {2, 5, 5}, rng), rng), 1e-6);
  GlobalMaxPool gmp;
  EXPECT_LT(check_layer(gmp, random_tensor(2, {3, 4, 4}, rng), rng), 1e-6);
  ReLU relu;
  EXPECT_LT(check_layer(relu, random_tensor(2, {2, 3, 3}, rng), rng), 1e-6);
}

TEST(Layers, PoolingShapesAndValues) {
  MaxPool2D pool(2, 2, 0);
  EXPECT_EQ(pool.output_shape({4, 64, 64}), (Shape{4, 32, 32}));
  EXPECT_EQ(pool.output_shape({4, 5, 5}), (Shape{4, 2, 2}));
  Tensor x(1, {1, 2, 2});
  x.data = {1, 4, -2, 3};
  EXPECT_EQ(pool.infer(x).data, Buffer{4});
  GlobalMaxPool g;
  EXPECT_EQ(g.infer(x).data, Buffer{4});
}

TEST(Layers, InceptionConcatenatesBranches) {
  Rng rng(6);
  std::vector<Sequential> branches(2);
  branches[0].add(std::make_unique<Conv2D>(3, 2, 1, 1, true));
  branches[1].add(std::make_unique<MaxPool2D>(3, 1, 1));
  branches[1].add(std::make_unique<Conv2D>(3, 5, 1, 1, true));
  Inception inc(std::move(branches));
  inc.init(rng);
  EXPECT_EQ(inc.output_shape({3, 4, 4}), (Shape{7, 4, 4}));
  EXPECT_LT(check_layer(inc, random_tensor(2, {3, 4, 4}, rng), rng), 1e-6);
}

TEST(Loss, SoftmaxAndCrossEntropy) {
  const auto p = softmax(std::vector<double>{0.0, 0.0});
  EXPECT_DOUBLE_EQ(p[0], 0.5);
  EXPECT_DOUBLE_EQ(p[1], 0.5);
  const auto q = softmax(std::vector<double>{1000.0, -1000.0});
  EXPECT_DOUBLE_EQ(q[0], 1.0);

  Tensor logits(1, {2, 1, 1});
  logits.data = {8.0, 0.0};  // p(class 0) = 0.99966
  const std::vector<std::uint8_t> labels{0};
  Tensor grad;
  const double l = softmax_cross_entropy(logits, labels, &grad);
  EXPECT_LE(l, 1e-3);
  EXPECT_NEAR(l, -std::log(softmax(logits.data)[0]), 1e-15);
  EXPECT_NEAR(grad.data[0] + grad.data[1], 0.0, 1e-15);
}

TEST(Loss, CrossEntropyGradientIsMeanOverBatch) {
  Rng rng(7);
  Tensor logits = random_tensor(3, {2, 1, 1}, rng);
  const std::vector<std::uint8_t> labels{0, 1, 1};
  Tensor grad;
  softmax_cross_entropy(logits, labels, &grad);
  const double eps = 1e-6;
  for (std::size_t i = 0; i < logits.data.size(); ++i) {
    Tensor p = logits, m = logits;
    p.data[i] += eps;
    m.data[i] -= eps;
    const double num = (softmax_cross_entropy(p, labels, nullptr) - softmax_cross_entropy(m, labels, nullptr)) / (2 * eps);
    EXPECT_NEAR(grad.data[i], num, 1e-8);
  }
}

}  // namespace
}  // namespace aidroid::nn
