#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "helpers.hpp"
#include "trlab/nn/gradcheck.hpp"
#include "trlab/nn/layers.hpp"

using namespace trlab;
using namespace trlab::nn;
using trlab::testing::random_tensor;

namespace {

TensorD naive_conv(const TensorD& x, const TensorD& k) {
  const std::size_t N = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  const std::size_t K = k.dim(0), O = k.dim(3);
  const long pad = static_cast<long>(K / 2);
  TensorD y({N, H, W, O});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t i = 0; i < H; ++i)
      for (std::size_t j = 0; j < W; ++j)
        for (std::size_t o = 0; o < O; ++o) {
          double s = 0;
          for (std::size_t a = 0; a < K; ++a)
            for (std::size_t b = 0; b < K; ++b)
              for (std::size_t c = 0; c < C; ++c) {
                const long yi = long(i) + long(a) - pad, xj = long(j) + long(b) - pad;
                if (yi < 0 || xj < 0 || yi >= long(H) || xj >= long(W)) continue;
                s += x.at(n, yi, xj, c) * k.at(a, b, c, o);
              }
          y.at(n, i, j, o) = s;
        }
  return y;
}

TensorD windowed_max(const TensorD& x) {
  const std::size_t N = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  const std::size_t oh = (H + 1) / 2, ow = (W + 1) / 2;
  const long ph = static_cast<long>(std::max<long>(long(oh - 1) * 2 + 3 - long(H), 0) / 2);
  const long pw = static_cast<long>(std::max<long>(long(ow - 1) * 2 + 3 - long(W), 0) / 2);
  TensorD y({N, oh, ow, C});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t i = 0; i < oh; ++i)
      for (std::size_t j = 0; j < ow; ++j)
        for (std::size_t c = 0; c < C; ++c) {
          double m = -std::numeric_limits<double>::infinity();
          for (long a = 0; a < 3; ++a)
            for (long b = 0; b < 3; ++b) {
              const long yi = long(i) * 2 + a - ph, xj = long(j) * 2 + b - pw;
              if (yi < 0 || xj < 0 || yi >= long(H) || xj >= long(W)) continue;
              m = std::max(m, x.at(n, yi, xj, c));
            }
          y.at(n, i, j, c) = m;
        }
  return y;
}

double weighted_sum(const TensorD& y, const TensorD& r) {
  double s = 0;
  for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * r[i];
  return s;
}

std::vector<double*> ptrs(TensorD& t) {
  std::vector<double*> p;
  for (auto& v : t.vec()) p.push_back(&v);
  return p;
}

void append(std::vector<double>& a, const TensorD& g) { a.insert(a.end(), g.vec().begin(), g.vec().end()); }

std::uint64_t signature(const std::vector<double>& v) {
  std::uint64_t h = 1469598103934665603ULL;
  for (double x : v) h = (h ^ static_cast<std::uint64_t>(x > 0)) * 1099511628211ULL;
  return h;
}

}  // namespace

TEST(Conv, MatchesNaiveSixLoop) {
  for (std::size_t K : {1u, 3u, 5u, 7u}) {
    const TensorD x = random_tensor<double>({2, 6, 5, 3}, 10 + K);
    const TensorD k = random_tensor<double>({K, K, 3, 4}, 20 + K);
    const TensorD y = conv2d_forward(x, k);
    const TensorD ref = naive_conv(x, k);
    ASSERT_EQ(y.shape(), ref.shape());
    for (std::size_t i = 0; i < y.size(); ++i) ASSERT_NEAR(y[i], ref[i], 1e-12) << "K=" << K;
  }
}

TEST(Conv, FloatPathAgreesWithDouble) {
  const TensorD x = random_tensor<double>({1, 8, 8, 3}, 1);
  const TensorD k = random_tensor<double>({5, 5, 3, 6}, 2);
  const TensorF yf = conv2d_forward(x.cast<float>(), k.cast<float>());
  const TensorD yd = conv2d_forward(x, k);
  for (std::size_t i = 0; i < yd.size(); ++i) ASSERT_NEAR(yf[i], yd[i], 1e-4);
}

TEST(Conv, RejectsMismatchedChannels) {
  EXPECT_THROW(conv2d_forward(TensorD({1, 4, 4, 3}), TensorD({3, 3, 2, 1})), ShapeError);
}

TEST(Conv, GradientCheck) {
  TensorD x = random_tensor<double>({2, 5, 5, 2}, 3);
  TensorD k = random_tensor<double>({3, 3, 2, 3}, 4);
  const TensorD r = random_tensor<double>({2, 5, 5, 3}, 5);
  const auto g = conv2d_backward(x, k, r);
  std::vector<double*> coords = ptrs(k);
  for (auto* p : ptrs(x)) coords.push_back(p);
  std::vector<double> analytic;
  append(analytic, g.kernel);
  append(analytic, g.input);
  RngStream s(1, "conv-gc");
  const auto res = grad_check([&](std::uint64_t*) { return weighted_sum(conv2d_forward(x, k), r); }, coords,
                              analytic, 200, s);
  EXPECT_GT(res.checked, 100u);
  EXPECT_LT(res.max_rel_error, 1e-6);
}

TEST(MaxPool, MatchesWindowedMax) {
  for (auto [h, w] : std::vector<std::pair<std::size_t, std::size_t>>{{3, 3}, {4, 4}, {5, 6}, {7, 7}, {10, 9}}) {
    const TensorD x = random_tensor<double>({2, h, w, 3}, h * 31 + w);
    const TensorD y = maxpool_forward(x);
    const TensorD ref = windowed_max(x);
    ASSERT_EQ(y.shape(), ref.shape());
    for (std::size_t i = 0; i < y.size(); ++i) ASSERT_EQ(y[i], ref[i]);
  }
}

TEST(MaxPool, TiesRouteGradientToFirstElement) {
  TensorD x({1, 3, 3, 1}, 2.0);
  PoolCache<double> cache;
  const TensorD y = maxpool_forward(x, &cache);
  ASSERT_EQ(y.size(), 4u);
  const TensorD g = maxpool_backward(TensorD({1, 2, 2, 1}, 1.0), cache);
  // Output (0,0) with padding 1 before covers rows/cols 0..1; the first in
  // row-major order is input (0,0). Every window's first valid element gets its gradient.
  EXPECT_EQ(g[0], 1.0);
  double total = 0;
  for (double v : g.vec()) total += v;
  EXPECT_EQ(total, 4.0);
}

TEST(MaxPool, GradientCheck) {
  TensorD x = random_tensor<double>({2, 7, 6, 2}, 6);
  const TensorD r = random_tensor<double>({2, 4, 3, 2}, 7);
  PoolCache<double> cache;
  maxpool_forward(x, &cache);
  const TensorD g = maxpool_backward(r, cache);
  std::vector<double> analytic;
  append(analytic, g);
  RngStream s(2, "pool-gc");
  const auto res = grad_check(
      [&](std::uint64_t* regime) {
        PoolCache<double> c;
        const double v = weighted_sum(maxpool_forward(x, &c), r);
        if (regime) {
          std::uint64_t h = 0;
          for (auto i : c.argmax) h = h * 1000003 + i;
          *regime = h;
        }
        return v;
      },
      ptrs(x), analytic, 168, s);
  EXPECT_GT(res.checked, 100u);
  EXPECT_LT(res.max_rel_error, 1e-6);
}

TEST(Relu, ForwardBackward) {
  TensorD x({4}, std::vector<double>{-1.0, 0.0, 2.0, -0.5});
  const TensorD y = relu_forward(x);
  EXPECT_EQ(y.vec(), (std::vector<double>{0.0, 0.0, 2.0, 0.0}));
  const TensorD g = relu_backward(y, TensorD({4}, 1.0));
  EXPECT_EQ(g.vec(), (std::vector<double>{0.0, 0.0, 1.0, 0.0}));
}

TEST(Relu, GradientCheck) {
  TensorD x = random_tensor<double>({50}, 8);
  const TensorD r = random_tensor<double>({50}, 9);
  const TensorD g = relu_backward(relu_forward(x), r);
  std::vector<double> analytic;
  append(analytic, g);
  RngStream s(3, "relu-gc");
  const auto res = grad_check(
      [&](std::uint64_t* regime) {
        if (regime) *regime = signature(x.vec());
        return weighted_sum(relu_forward(x), r);
      },
      ptrs(x), analytic, 50, s);
  EXPECT_EQ(res.checked + res.skipped, 50u);
  EXPECT_LT(res.max_rel_error, 1e-8);
}

TEST(GlobalAvgPool, ForwardBackwardAndGradientCheck) {
  TensorD x = random_tensor<double>({2, 3, 4, 5}, 10);
  const TensorD y = global_avgpool_forward(x);
  ASSERT_EQ(y.shape(), (Shape{2, 5}));
  double s = 0;
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 4; ++j) s += x.at(1, i, j, 2);
  EXPECT_NEAR(y[1 * 5 + 2], s / 12, 1e-14);
  const TensorD r = random_tensor<double>({2, 5}, 11);
  const TensorD g = global_avgpool_backward(r, x.shape());
  std::vector<double> analytic;
  append(analytic, g);
  RngStream st(4, "gap-gc");
  const auto res = grad_check([&](std::uint64_t*) { return weighted_sum(global_avgpool_forward(x), r); }, ptrs(x),
                              analytic, 120, st);
  EXPECT_LT(res.max_rel_error, 1e-8);
}

TEST(Dense, ForwardAndGradientCheck) {
  TensorD x = random_tensor<double>({3, 4}, 12);
  TensorD w = random_tensor<double>({4, 2}, 13);
  TensorD b = random_tensor<double>({2}, 14);
  const TensorD y = dense_forward(x, w, b);
  EXPECT_NEAR(y[1 * 2 + 1], x[4] * w[1] + x[5] * w[3] + x[6] * w[5] + x[7] * w[7] + b[1], 1e-14);
  const TensorD r = random_tensor<double>({3, 2}, 15);
  const auto g = dense_backward(x, w, r);
  std::vector<double*> coords = ptrs(x);
  for (auto* p : ptrs(w)) coords.push_back(p);
  for (auto* p : ptrs(b)) coords.push_back(p);
  std::vector<double> analytic;
  append(analytic, g.input);
  append(analytic, g.weight);
  append(analytic, g.bias);
  RngStream st(5, "dense-gc");
  const auto res =
      grad_check([&](std::uint64_t*) { return weighted_sum(dense_forward(x, w, b), r); }, coords, analytic, 100, st);
  EXPECT_EQ(res.checked, coords.size());
  EXPECT_LT(res.max_rel_error, 1e-8);
}

TEST(BatchNorm, TrainModeNormalizesAndUpdatesStats) {
  const TensorD x = random_tensor<double>({4, 3, 3, 2}, 16, 1.0, 3.0);
  TensorD gamma({2}, 1.0), beta({2}, 0.0), mm({2}, 0.0), mv({2}, 1.0);
  const BnHyper hyper{1e-3, 0.9};
  const TensorD y = batchnorm_forward(x, gamma, beta, mm, mv, BnMode::train, hyper);
  for (std::size_t c = 0; c < 2; ++c) {
    double s = 0, s2 = 0, xs = 0, xs2 = 0;
    const std::size_t n = 36;
    for (std::size_t i = 0; i < n; ++i) {
      s += y[i * 2 + c];
      s2 += y[i * 2 + c] * y[i * 2 + c];
      xs += x[i * 2 + c];
      xs2 += x[i * 2 + c] * x[i * 2 + c];
    }
    const double mean = xs / n, var = xs2 / n - mean * mean;
    EXPECT_NEAR(s / n, 0.0, 1e-12);
    EXPECT_NEAR(std::sqrt(s2 / n), std::sqrt(var) / (std::sqrt(var) + 1e-3), 1e-9);
    EXPECT_NEAR(mm[c], 0.1 * mean, 1e-12);
    EXPECT_NEAR(mv[c], 0.9 + 0.1 * var, 1e-12);
  }
}

TEST(BatchNorm, InferModeUsesMovingStatsAndLeavesThem) {
  const TensorD x = random_tensor<double>({2, 2, 2, 1}, 17);
  TensorD gamma({1}, 2.0), beta({1}, 0.5), mm({1}, 0.25), mv({1}, 4.0);
  const TensorD y = batchnorm_forward(x, gamma, beta, mm, mv, BnMode::infer, BnHyper{1e-3, 0.99});
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(y[i], 2.0 * (x[i] - 0.25) / (2.0 + 1e-3) + 0.5, 1e-14);
  EXPECT_EQ(mm[0], 0.25);
  EXPECT_EQ(mv[0], 4.0);
}

TEST(BatchNorm, TrainModeGradientCheck) {
  TensorD x = random_tensor<double>({3, 3, 3, 2}, 18);
  TensorD gamma = random_tensor<double>({2}, 19, 0.5, 1.5), beta = random_tensor<double>({2}, 20);
  TensorD mm({2}, 0.0), mv({2}, 1.0);
  const TensorD r = random_tensor<double>({3, 3, 3, 2}, 21);
  const BnHyper hyper{1e-3, 0.99};
  BnCache<double> cache;
  batchnorm_forward(x, gamma, beta, mm, mv, BnMode::train, hyper, &cache, false);
  const auto g = batchnorm_backward(r, gamma, cache);
  std::vector<double*> coords = ptrs(x);
  for (auto* p : ptrs(gamma)) coords.push_back(p);
  for (auto* p : ptrs(beta)) coords.push_back(p);
  std::vector<double> analytic;
  append(analytic, g.input);
  append(analytic, g.gamma);
  append(analytic, g.beta);
  RngStream st(6, "bn-gc");
  const auto res = grad_check(
      [&](std::uint64_t*) {
        return weighted_sum(batchnorm_forward(x, gamma, beta, mm, mv, BnMode::train, hyper, static_cast<BnCache<double>*>(nullptr), false), r);
      },
      coords, analytic, 200, st);
  EXPECT_EQ(res.checked, coords.size());
  EXPECT_LT(res.max_rel_error, 1e-6);
  EXPECT_EQ(mm[0], 0.0);
}

TEST(Loss, BceValueAndGradient) {
  TensorD z({2, 2}, std::vector<double>{0.0, 2.0, -1.0, 0.5});
  const TensorD y({2, 2}, std::vector<double>{1.0, 0.0, 0.0, 1.0});
  const auto res = multilabel_bce(z, y);
  auto sig = [](double v) { return 1 / (1 + std::exp(-v)); };
  const double expect = -(std::log(sig(0.0)) + std::log(1 - sig(2.0)) + std::log(1 - sig(-1.0)) +
                          std::log(sig(0.5))) / 4;
  EXPECT_NEAR(res.loss, expect, 1e-14);
  EXPECT_NEAR(res.grad[1], (sig(2.0) - 0.0) / 4, 1e-15);
  std::vector<double> analytic(res.grad.vec());
  RngStream st(7, "bce-gc");
  const auto gc = grad_check([&](std::uint64_t*) { return multilabel_bce(z, y).loss; }, ptrs(z), analytic, 4, st);
  EXPECT_LT(gc.max_rel_error, 1e-7);
}

TEST(Loss, StableForLargeLogits) {
  const TensorD z({1, 2}, std::vector<double>{800.0, -800.0});
  const TensorD y({1, 2}, std::vector<double>{0.0, 1.0});
  const auto res = multilabel_bce(z, y);
  EXPECT_TRUE(std::isfinite(res.loss));
  EXPECT_NEAR(res.loss, 800.0, 1e-9);
}

TEST(GradCheck, DetectsCorruptedGradient) {
  TensorD x = random_tensor<double>({3, 4}, 22);
  TensorD w = random_tensor<double>({4, 2}, 23);
  TensorD b({2}, 0.0);
  const TensorD r = random_tensor<double>({3, 2}, 24);
  auto g = dense_backward(x, w, r);
  g.weight[3] *= 1.05;
  std::vector<double> analytic;
  append(analytic, g.weight);
  RngStream st(8, "mut");
  const auto res =
      grad_check([&](std::uint64_t*) { return weighted_sum(dense_forward(x, w, b), r); }, ptrs(w), analytic, 8, st);
  EXPECT_GT(res.max_rel_error, 1e-2);
}
