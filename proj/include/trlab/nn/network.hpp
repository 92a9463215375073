#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "trlab/nn/layers.hpp"
#include "trlab/weights.hpp"
#include "trlab/zoo.hpp"

namespace trlab::nn {

/// Executes a ModelGraph forward and backward over a weight store.
///
/// In train mode every conv block normalizes with batch statistics and
/// updates its moving statistics, except blocks whose moving statistics are
/// frozen by the mask: those run in inference mode and are left untouched.
template <typename T>
class Network {
 public:
  explicit Network(ModelGraph graph, BnHyper bn = {});

  const ModelGraph& graph() const noexcept { return graph_; }

  /// Runs layers [0, stop_after] (all by default) and returns the last output.
  Tensor<T> forward(const Tensor<T>& input, BasicWeightStore<T>& weights, BnMode mode,
                    const FreezeMask* mask = nullptr, std::optional<std::size_t> stop_after = std::nullopt);

  struct Gradients {
    std::vector<Tensor<T>> params;  // aligned with store entries; empty when not computed
    Tensor<T> input;                // empty unless requested
  };

  /// Backpropagates from the logits of the last full forward pass. Gradients
  /// are produced only for trainable, unmasked tensors; propagation stops
  /// below the lowest layer that needs one.
  Gradients backward(const Tensor<T>& grad_logits, const BasicWeightStore<T>& weights,
                     const FreezeMask* mask = nullptr, bool need_input_grad = false);

  /// Hash of every relu activation pattern and pool argmax of the last
  /// forward pass; changes exactly when an input crosses a kink.
  std::uint64_t regime_signature() const;

 private:
  struct LayerCache {
    Tensor<T> input;
    Tensor<T> cols;
    BnCache<T> bn;
    Tensor<T> output;
    PoolCache<T> pool;
  };

  struct LayerParams {
    std::optional<std::size_t> kernel, gamma, beta, mean, var, weight, bias;
  };

  ModelGraph graph_;
  BnHyper bn_;
  std::vector<LayerParams> params_;
  std::vector<LayerCache> cache_;
  std::size_t last_layer_ = 0;
  bool full_pass_ = false;
};

}  // namespace trlab::nn
