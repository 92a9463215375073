#include "trlab/nn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Core>

namespace trlab::nn {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using CMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using MMap = Eigen::Map<RowMat<T>>;

void require_rank(const Shape& s, std::size_t r, const char* what) {
  if (s.size() != r) throw ShapeError(std::string(what) + ": expected rank " + std::to_string(r) + ", got " + shape_str(s));
}

}  // namespace

// ---------------------------------------------------------------- conv2d ----

template <typename T>
Tensor<T> im2col(const Tensor<T>& input, std::size_t k) {
  require_rank(input.shape(), 4, "im2col");
  const std::size_t n = input.dim(0), h = input.dim(1), w = input.dim(2), c = input.dim(3);
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k / 2);
  const std::size_t row_len = k * k * c;
  Tensor<T> cols({n * h * w, row_len});
  T* dst = cols.raw();
  const T* src = input.raw();
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        for (std::size_t ky = 0; ky < k; ++ky) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y + ky) - pad;
          for (std::size_t kx = 0; kx < k; ++kx) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x + kx) - pad;
            if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(h) || ix >= static_cast<std::ptrdiff_t>(w)) {
              std::fill(dst, dst + c, T{0});
            } else {
              std::copy_n(src + ((b * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix)) * c, c, dst);
            }
            dst += c;
          }
        }
      }
    }
  }
  return cols;
}

namespace {

template <typename T>
void check_conv_shapes(const Tensor<T>& input, const Tensor<T>& kernel) {
  require_rank(input.shape(), 4, "conv2d input");
  require_rank(kernel.shape(), 4, "conv2d kernel");
  if (kernel.dim(0) != kernel.dim(1) || kernel.dim(0) % 2 == 0)
    throw ShapeError("conv2d: kernel must be square with odd size, got " + shape_str(kernel.shape()));
  if (kernel.dim(2) != input.dim(3))
    throw ShapeError("conv2d: kernel input channels " + std::to_string(kernel.dim(2)) +
                     " != input channels " + std::to_string(input.dim(3)));
}

template <typename T>
void col2im_add(const Tensor<T>& gcols, std::size_t k, Tensor<T>& grad_input) {
  const std::size_t n = grad_input.dim(0), h = grad_input.dim(1), w = grad_input.dim(2), c = grad_input.dim(3);
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k / 2);
  const T* src = gcols.raw();
  T* dst = grad_input.raw();
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        for (std::size_t ky = 0; ky < k; ++ky) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y + ky) - pad;
          for (std::size_t kx = 0; kx < k; ++kx) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x + kx) - pad;
            if (iy >= 0 && ix >= 0 && iy < static_cast<std::ptrdiff_t>(h) && ix < static_cast<std::ptrdiff_t>(w)) {
              T* d = dst + ((b * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix)) * c;
              for (std::size_t ci = 0; ci < c; ++ci) d[ci] += src[ci];
            }
            src += c;
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const Tensor<T>& kernel, Tensor<T>* cols_out) {
  check_conv_shapes(input, kernel);
  const std::size_t k = kernel.dim(0), cout = kernel.dim(3);
  const std::size_t n = input.dim(0), h = input.dim(1), w = input.dim(2);
  Tensor<T> cols = im2col(input, k);
  Tensor<T> out({n, h, w, cout});
  const std::size_t rows = n * h * w, inner = cols.dim(1);
  MMap<T>(out.raw(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cout)).noalias() =
      CMap<T>(cols.raw(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(inner)) *
      CMap<T>(kernel.raw(), static_cast<Eigen::Index>(inner), static_cast<Eigen::Index>(cout));
  if (cols_out) *cols_out = std::move(cols);
  return out;
}

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& grad_out,
                             bool need_input_grad, const Tensor<T>* cols) {
  check_conv_shapes(input, kernel);
  const std::size_t k = kernel.dim(0), cout = kernel.dim(3);
  const std::size_t n = input.dim(0), h = input.dim(1), w = input.dim(2);
  if (grad_out.shape() != Shape{n, h, w, cout})
    throw ShapeError("conv2d_backward: grad_out shape " + shape_str(grad_out.shape()));
  Tensor<T> local;
  if (!cols || cols->shape() != Shape{n * h * w, k * k * input.dim(3)}) {
    local = im2col(input, k);
    cols = &local;
  }
  const auto rows = static_cast<Eigen::Index>(n * h * w);
  const auto inner = static_cast<Eigen::Index>(cols->dim(1));
  const auto co = static_cast<Eigen::Index>(cout);
  CMap<T> colm(cols->raw(), rows, inner);
  CMap<T> g(grad_out.raw(), rows, co);

  ConvGrads<T> out;
  out.kernel = Tensor<T>(kernel.shape());
  MMap<T>(out.kernel.raw(), inner, co).noalias() = colm.transpose() * g;
  if (need_input_grad) {
    Tensor<T> gcols({n * h * w, cols->dim(1)});
    MMap<T>(gcols.raw(), rows, inner).noalias() = g * CMap<T>(kernel.raw(), inner, co).transpose();
    out.input = Tensor<T>(input.shape());
    col2im_add(gcols, k, out.input);
  }
  return out;
}

// ------------------------------------------------------------- batchnorm ----

template <typename T>
Tensor<T> batchnorm_forward(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                            Tensor<T>& moving_mean, Tensor<T>& moving_var, BnMode mode,
                            const BnHyper& hyper, BnCache<T>* cache, bool update_stats) {
  if (x.rank() < 2) throw ShapeError("batchnorm: input rank must be >= 2");
  const std::size_t c = x.shape().back();
  if (gamma.size() != c || beta.size() != c || moving_mean.size() != c || moving_var.size() != c)
    throw ShapeError("batchnorm: channel dim " + std::to_string(c) + " does not match state");
  if (!(hyper.epsilon > 0.0)) throw InvalidArgument("batchnorm: epsilon must be positive");
  const std::size_t m = x.size() / c;
  const T* xs = x.raw();

  std::vector<double> mean(c, 0.0), var(c, 0.0);
  if (mode == BnMode::train) {
    if (x.dim(0) < 2) throw InvalidArgument("batchnorm: train mode needs a batch of at least 2");
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t ch = 0; ch < c; ++ch) mean[ch] += xs[i * c + ch];
    for (auto& v : mean) v /= static_cast<double>(m);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double d = xs[i * c + ch] - mean[ch];
        var[ch] += d * d;
      }
    for (auto& v : var) v /= static_cast<double>(m);
    if (update_stats) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        moving_mean[ch] = static_cast<T>(hyper.momentum * moving_mean[ch] + (1.0 - hyper.momentum) * mean[ch]);
        moving_var[ch] = static_cast<T>(hyper.momentum * moving_var[ch] + (1.0 - hyper.momentum) * var[ch]);
      }
    }
  } else {
    for (std::size_t ch = 0; ch < c; ++ch) {
      mean[ch] = moving_mean[ch];
      var[ch] = std::max<double>(moving_var[ch], 0.0);
    }
  }

  std::vector<T> mu(c), sigma(c), inv_den(c);
  for (std::size_t ch = 0; ch < c; ++ch) {
    mu[ch] = static_cast<T>(mean[ch]);
    sigma[ch] = static_cast<T>(std::sqrt(var[ch]));
    inv_den[ch] = static_cast<T>(1.0 / (std::sqrt(var[ch]) + hyper.epsilon));
  }
  Tensor<T> y(x.shape());
  Tensor<T> xhat(cache ? x.shape() : Shape{0});
  T* ys = y.raw();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const T xh = (xs[i * c + ch] - mu[ch]) * inv_den[ch];
      if (cache) xhat[i * c + ch] = xh;
      ys[i * c + ch] = gamma[ch] * xh + beta[ch];
    }
  }
  if (cache) {
    cache->mode = mode;
    cache->sigma = std::move(sigma);
    cache->inv_den = std::move(inv_den);
    cache->xhat = std::move(xhat);
  }
  return y;
}

template <typename T>
BnGrads<T> batchnorm_backward(const Tensor<T>& grad_out, const Tensor<T>& gamma, const BnCache<T>& cache,
                              bool need_input_grad) {
  const std::size_t c = gamma.size();
  if (grad_out.shape() != cache.xhat.shape()) throw ShapeError("batchnorm_backward: shape mismatch with cache");
  const std::size_t m = grad_out.size() / c;
  const T* g = grad_out.raw();
  const T* xh = cache.xhat.raw();

  std::vector<double> dgamma(c, 0.0), dbeta(c, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t ch = 0; ch < c; ++ch) {
      dgamma[ch] += static_cast<double>(g[i * c + ch]) * xh[i * c + ch];
      dbeta[ch] += g[i * c + ch];
    }

  BnGrads<T> out;
  out.gamma = Tensor<T>({c});
  out.beta = Tensor<T>({c});
  for (std::size_t ch = 0; ch < c; ++ch) {
    out.gamma[ch] = static_cast<T>(dgamma[ch]);
    out.beta[ch] = static_cast<T>(dbeta[ch]);
  }
  if (!need_input_grad) return out;

  out.input = Tensor<T>(grad_out.shape());
  T* dx = out.input.raw();
  if (cache.mode == BnMode::infer) {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t ch = 0; ch < c; ++ch) dx[i * c + ch] = g[i * c + ch] * gamma[ch] * cache.inv_den[ch];
    return out;
  }
  // gh = g * gamma; dx = (gh - mean(gh) - xhat * (d / sigma) * mean(gh * xhat)) / d, d = sigma + eps.
  std::vector<T> mean_gh(c), coef(c);
  const double inv_m = 1.0 / static_cast<double>(m);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double den = 1.0 / static_cast<double>(cache.inv_den[ch]);
    mean_gh[ch] = static_cast<T>(gamma[ch] * dbeta[ch] * inv_m);
    const double mean_gh_xhat = gamma[ch] * dgamma[ch] * inv_m;
    coef[ch] = cache.sigma[ch] > T{0} ? static_cast<T>(den / cache.sigma[ch] * mean_gh_xhat) : T{0};
  }
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const T gh = g[i * c + ch] * gamma[ch];
      dx[i * c + ch] = (gh - mean_gh[ch] - xh[i * c + ch] * coef[ch]) * cache.inv_den[ch];
    }
  return out;
}

// ------------------------------------------------------------------ relu ----

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T{0} ? x[i] : T{0};
  return y;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& output, const Tensor<T>& grad_out) {
  if (output.shape() != grad_out.shape()) throw ShapeError("relu_backward: shape mismatch");
  Tensor<T> g(grad_out.shape());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = output[i] > T{0} ? grad_out[i] : T{0};
  return g;
}

// --------------------------------------------------------------- maxpool ----

template <typename T>
Tensor<T> maxpool_forward(const Tensor<T>& x, PoolCache<T>* cache) {
  require_rank(x.shape(), 4, "maxpool");
  const std::size_t n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  if (h < 3 || w < 3) throw ShapeError("maxpool_3x3_s2: spatial dims too small " + shape_str(x.shape()));
  const std::size_t oh = (h + 1) / 2, ow = (w + 1) / 2;
  const std::size_t pad_top = ((oh - 1) * 2 + 3 - h) / 2;
  const std::size_t pad_left = ((ow - 1) * 2 + 3 - w) / 2;
  Tensor<T> y({n, oh, ow, c});
  std::vector<std::uint32_t> arg(y.size());
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox)
        for (std::size_t ch = 0; ch < c; ++ch) {
          T best = -std::numeric_limits<T>::infinity();
          std::size_t best_idx = 0;
          bool found = false;
          for (std::size_t dy = 0; dy < 3; ++dy) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * 2 + dy) - static_cast<std::ptrdiff_t>(pad_top);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
            for (std::size_t dx = 0; dx < 3; ++dx) {
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * 2 + dx) - static_cast<std::ptrdiff_t>(pad_left);
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
              const std::size_t idx = ((b * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix)) * c + ch;
              if (!found || x[idx] > best) {
                best = x[idx];
                best_idx = idx;
                found = true;
              }
            }
          }
          const std::size_t o = ((b * oh + oy) * ow + ox) * c + ch;
          y[o] = best;
          arg[o] = static_cast<std::uint32_t>(best_idx);
        }
  if (cache) {
    cache->input_shape = x.shape();
    cache->argmax = std::move(arg);
  }
  return y;
}

template <typename T>
Tensor<T> maxpool_backward(const Tensor<T>& grad_out, const PoolCache<T>& cache) {
  if (grad_out.size() != cache.argmax.size()) throw ShapeError("maxpool_backward: shape mismatch with cache");
  Tensor<T> g(cache.input_shape);
  for (std::size_t o = 0; o < grad_out.size(); ++o) g[cache.argmax[o]] += grad_out[o];
  return g;
}

// -------------------------------------------------------- global avgpool ----

template <typename T>
Tensor<T> global_avgpool_forward(const Tensor<T>& x) {
  require_rank(x.shape(), 4, "global_avgpool");
  const std::size_t n = x.dim(0), hw = x.dim(1) * x.dim(2), c = x.dim(3);
  Tensor<T> y({n, c});
  std::vector<double> acc(c);
  for (std::size_t b = 0; b < n; ++b) {
    std::fill(acc.begin(), acc.end(), 0.0);
    const T* src = x.raw() + b * hw * c;
    for (std::size_t p = 0; p < hw; ++p)
      for (std::size_t ch = 0; ch < c; ++ch) acc[ch] += src[p * c + ch];
    for (std::size_t ch = 0; ch < c; ++ch) y[b * c + ch] = static_cast<T>(acc[ch] / static_cast<double>(hw));
  }
  return y;
}

template <typename T>
Tensor<T> global_avgpool_backward(const Tensor<T>& grad_out, const Shape& input_shape) {
  require_rank(input_shape, 4, "global_avgpool_backward");
  const std::size_t n = input_shape[0], hw = input_shape[1] * input_shape[2], c = input_shape[3];
  if (grad_out.shape() != Shape{n, c}) throw ShapeError("global_avgpool_backward: grad shape mismatch");
  Tensor<T> g(input_shape);
  const T scale = static_cast<T>(1.0 / static_cast<double>(hw));
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t p = 0; p < hw; ++p)
      for (std::size_t ch = 0; ch < c; ++ch) g[(b * hw + p) * c + ch] = grad_out[b * c + ch] * scale;
  return g;
}

// ----------------------------------------------------------------- dense ----

template <typename T>
Tensor<T> dense_forward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  require_rank(x.shape(), 2, "dense input");
  require_rank(weight.shape(), 2, "dense weight");
  if (weight.dim(0) != x.dim(1) || bias.size() != weight.dim(1))
    throw ShapeError("dense: input " + shape_str(x.shape()) + " weight " + shape_str(weight.shape()) +
                     " bias " + shape_str(bias.shape()));
  const auto n = static_cast<Eigen::Index>(x.dim(0));
  const auto cin = static_cast<Eigen::Index>(weight.dim(0));
  const auto cout = static_cast<Eigen::Index>(weight.dim(1));
  Tensor<T> y({x.dim(0), weight.dim(1)});
  MMap<T> ym(y.raw(), n, cout);
  ym.noalias() = CMap<T>(x.raw(), n, cin) * CMap<T>(weight.raw(), cin, cout);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < cout; ++j) ym(i, j) += bias[static_cast<std::size_t>(j)];
  return y;
}

template <typename T>
DenseGrads<T> dense_backward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& grad_out,
                             bool need_input_grad) {
  const auto n = static_cast<Eigen::Index>(x.dim(0));
  const auto cin = static_cast<Eigen::Index>(weight.dim(0));
  const auto cout = static_cast<Eigen::Index>(weight.dim(1));
  if (grad_out.shape() != Shape{x.dim(0), weight.dim(1)}) throw ShapeError("dense_backward: grad shape mismatch");
  CMap<T> g(grad_out.raw(), n, cout);
  DenseGrads<T> out;
  out.weight = Tensor<T>(weight.shape());
  MMap<T>(out.weight.raw(), cin, cout).noalias() = CMap<T>(x.raw(), n, cin).transpose() * g;
  out.bias = Tensor<T>({weight.dim(1)});
  for (Eigen::Index j = 0; j < cout; ++j) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) s += g(i, j);
    out.bias[static_cast<std::size_t>(j)] = static_cast<T>(s);
  }
  if (need_input_grad) {
    out.input = Tensor<T>(x.shape());
    MMap<T>(out.input.raw(), n, cin).noalias() = g * CMap<T>(weight.raw(), cin, cout).transpose();
  }
  return out;
}

// ------------------------------------------------------------------- bce ----

template <typename T>
LossResult<T> multilabel_bce(const Tensor<T>& logits, const Tensor<T>& labels) {
  if (logits.shape() != labels.shape()) throw ShapeError("multilabel_bce: logits/labels shape mismatch");
  const std::size_t total = logits.size();
  if (total == 0) throw InvalidArgument("multilabel_bce: empty batch");
  LossResult<T> out;
  out.grad = Tensor<T>(logits.shape());
  const double inv = 1.0 / static_cast<double>(total);
  double sum = 0.0;
  for (std::size_t i = 0; i < total; ++i) {
    const double y = labels[i];
    if (y != 0.0 && y != 1.0) throw InvalidArgument("multilabel_bce: labels must be 0 or 1");
    const double z = logits[i];
    sum += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
    const double s = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
    out.grad[i] = static_cast<T>((s - y) * inv);
  }
  out.loss = sum * inv;
  return out;
}

#define TRLAB_INSTANTIATE(T)                                                                              \
  template Tensor<T> im2col(const Tensor<T>&, std::size_t);                                              \
  template Tensor<T> conv2d_forward(const Tensor<T>&, const Tensor<T>&, Tensor<T>*);                    \
  template ConvGrads<T> conv2d_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, bool,      \
                                        const Tensor<T>*);                                               \
  template Tensor<T> batchnorm_forward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Tensor<T>&, \
                                       Tensor<T>&, BnMode, const BnHyper&, BnCache<T>*, bool);           \
  template BnGrads<T> batchnorm_backward(const Tensor<T>&, const Tensor<T>&, const BnCache<T>&, bool);  \
  template Tensor<T> relu_forward(const Tensor<T>&);                                                     \
  template Tensor<T> relu_backward(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> maxpool_forward(const Tensor<T>&, PoolCache<T>*);                                   \
  template Tensor<T> maxpool_backward(const Tensor<T>&, const PoolCache<T>&);                            \
  template Tensor<T> global_avgpool_forward(const Tensor<T>&);                                           \
  template Tensor<T> global_avgpool_backward(const Tensor<T>&, const Shape&);                            \
  template Tensor<T> dense_forward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);               \
  template DenseGrads<T> dense_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, bool);    \
  template LossResult<T> multilabel_bce(const Tensor<T>&, const Tensor<T>&);

TRLAB_INSTANTIATE(float)
TRLAB_INSTANTIATE(double)

#undef TRLAB_INSTANTIATE

}  // namespace trlab::nn
