#pragma once

#include <cstdint>
#include <vector>

#include "trlab/tensor.hpp"

/// Layer kernels for the CBR family. Activations are NHWC, conv kernels
/// K x K x Cin x Cout (HWIO). Instantiated for float (training) and double
/// (gradient checking).
namespace trlab::nn {

// ---- conv2d: stride 1, zero "same" padding, cross-correlation, no bias ----

/// Patch matrix of the input: (N*H*W) x (K*K*Cin), columns ordered (ky, kx, ci).
template <typename T>
Tensor<T> im2col(const Tensor<T>& input, std::size_t k);

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const Tensor<T>& kernel, Tensor<T>* cols_out = nullptr);

template <typename T>
struct ConvGrads {
  Tensor<T> input;   // empty when not requested
  Tensor<T> kernel;
};

/// `cols` may be the im2col matrix cached by the forward pass.
template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& grad_out,
                             bool need_input_grad = true, const Tensor<T>* cols = nullptr);

// ---- batch normalization ----
//   y = gamma * (x - mu) / (sigma + eps) + beta
// Train mode normalizes with the batch's per-channel statistics over N,H,W
// (population variance) and folds them into the moving statistics:
//   m <- momentum * m + (1 - momentum) * batch_stat.
// Infer mode uses mu = moving_mean, sigma = sqrt(moving_var).

enum class BnMode { train, infer };

struct BnHyper {
  double epsilon = 1e-3;
  double momentum = 0.99;
};

template <typename T>
struct BnCache {
  BnMode mode = BnMode::infer;
  std::vector<T> sigma;     // per channel
  std::vector<T> inv_den;   // 1 / (sigma + eps)
  Tensor<T> xhat;           // (x - mu) / (sigma + eps)
};

template <typename T>
Tensor<T> batchnorm_forward(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                            Tensor<T>& moving_mean, Tensor<T>& moving_var, BnMode mode,
                            const BnHyper& hyper, BnCache<T>* cache = nullptr, bool update_stats = true);

template <typename T>
struct BnGrads {
  Tensor<T> input, gamma, beta;
};

template <typename T>
BnGrads<T> batchnorm_backward(const Tensor<T>& grad_out, const Tensor<T>& gamma, const BnCache<T>& cache,
                              bool need_input_grad = true);

// ---- relu: subgradient at 0 is 0 ----

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& x);
/// `output` is the forward result; gradient passes where output > 0.
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& output, const Tensor<T>& grad_out);

// ---- maxpool 3x3, stride 2, "same" padding with -inf fill ----
// Output extent ceil(H/2); the padding total max((out-1)*2 + 3 - H, 0) is
// split with the smaller half before. Ties go to the first element in
// row-major window order.

template <typename T>
struct PoolCache {
  Shape input_shape;
  std::vector<std::uint32_t> argmax;  // flat input index per output element
};

template <typename T>
Tensor<T> maxpool_forward(const Tensor<T>& x, PoolCache<T>* cache = nullptr);
template <typename T>
Tensor<T> maxpool_backward(const Tensor<T>& grad_out, const PoolCache<T>& cache);

// ---- global average pool: N x H x W x C -> N x C ----

template <typename T>
Tensor<T> global_avgpool_forward(const Tensor<T>& x);
template <typename T>
Tensor<T> global_avgpool_backward(const Tensor<T>& grad_out, const Shape& input_shape);

// ---- dense: N x Cin times Cin x Cout plus bias ----

template <typename T>
Tensor<T> dense_forward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

template <typename T>
struct DenseGrads {
  Tensor<T> input, weight, bias;
};

template <typename T>
DenseGrads<T> dense_backward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& grad_out,
                             bool need_input_grad = true);

// ---- multi-label sigmoid binary cross-entropy ----

template <typename T>
struct LossResult {
  double loss = 0.0;   // mean over N*C
  Tensor<T> grad;      // (sigmoid(z) - y) / (N*C)
};

template <typename T>
LossResult<T> multilabel_bce(const Tensor<T>& logits, const Tensor<T>& labels);

}  // namespace trlab::nn
