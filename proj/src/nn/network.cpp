#include "trlab/nn/network.hpp"

#include "trlab/rng.hpp"

namespace trlab::nn {

namespace {

bool trainable(const FreezeMask* mask, const std::string& name, Role role) {
  if (!is_trainable(role)) return false;
  if (!mask) return true;
  auto it = mask->find(name);
  return it == mask->end() || it->second;
}

bool stats_frozen(const FreezeMask* mask, const std::string& layer) {
  if (!mask) return false;
  for (const char* suffix : {"/moving_mean", "/moving_var"}) {
    auto it = mask->find(layer + suffix);
    if (it != mask->end() && !it->second) return true;
  }
  return false;
}

}  // namespace

template <typename T>
Network<T>::Network(ModelGraph graph, BnHyper bn) : graph_(std::move(graph)), bn_(bn) {
  validate_graph(graph_);
  params_.resize(graph_.layers.size());
  cache_.resize(graph_.layers.size());
  const auto layout = parameter_layout(graph_);
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const std::size_t li = graph_.require_index(layout[i].layer);
    auto& p = params_[li];
    switch (layout[i].role) {
      case Role::kernel: p.kernel = i; break;
      case Role::gamma: p.gamma = i; break;
      case Role::beta: p.beta = i; break;
      case Role::moving_mean: p.mean = i; break;
      case Role::moving_var: p.var = i; break;
      case Role::dense_weight: p.weight = i; break;
      case Role::dense_bias: p.bias = i; break;
    }
  }
}

template <typename T>
Tensor<T> Network<T>::forward(const Tensor<T>& input, BasicWeightStore<T>& w, BnMode mode, const FreezeMask* mask,
                              std::optional<std::size_t> stop_after) {
  if (w.fingerprint() != graph_.fingerprint())
    throw InvalidArgument("weights do not belong to graph " + graph_.variant_tag);
  const Shape expect{input.rank() == 4 ? input.dim(0) : 0, graph_.input.height, graph_.input.width,
                     graph_.input.channels};
  if (input.shape() != expect) throw ShapeError("network input " + shape_str(input.shape()) + " expected " + shape_str(expect));

  const std::size_t last = stop_after ? std::min(*stop_after, graph_.layers.size() - 1) : graph_.layers.size() - 1;
  Tensor<T> x = input;
  for (std::size_t li = 0; li <= last; ++li) {
    const auto& spec = graph_.layers[li];
    auto& c = cache_[li];
    const auto& p = params_[li];
    c.input = x;
    switch (spec.kind) {
      case LayerKind::conv_bn_relu: {
        Tensor<T> z = conv2d_forward(x, w.entry(*p.kernel).value, &c.cols);
        const BnMode m = (mode == BnMode::train && !stats_frozen(mask, spec.name)) ? BnMode::train : BnMode::infer;
        z = batchnorm_forward(z, w.entry(*p.gamma).value, w.entry(*p.beta).value, w.entry(*p.mean).value,
                              w.entry(*p.var).value, m, bn_, &c.bn, /*update_stats=*/true);
        x = relu_forward(z);
        break;
      }
      case LayerKind::maxpool:
        x = maxpool_forward(x, &c.pool);
        break;
      case LayerKind::global_avgpool:
        x = global_avgpool_forward(x);
        if (li == last && stop_after) x.reshape({x.dim(0), 1, 1, x.dim(1)});
        break;
      case LayerKind::dense_head: {
        Tensor<T> flat = x;
        if (flat.rank() == 4) flat.reshape({flat.dim(0), flat.dim(3)});
        c.input = flat;
        x = dense_forward(flat, w.entry(*p.weight).value, w.entry(*p.bias).value);
        break;
      }
    }
    c.output = spec.kind == LayerKind::conv_bn_relu || spec.kind == LayerKind::dense_head ? x : Tensor<T>();
  }
  last_layer_ = last;
  full_pass_ = last == graph_.layers.size() - 1;
  return x;
}

template <typename T>
typename Network<T>::Gradients Network<T>::backward(const Tensor<T>& grad_logits, const BasicWeightStore<T>& w,
                                                    const FreezeMask* mask, bool need_input_grad) {
  if (!full_pass_) throw Error("Network::backward requires a preceding full forward pass");
  Gradients out;
  out.params.resize(w.size());

  // Lowest layer that owns a tensor needing a gradient.
  std::size_t lowest = graph_.layers.size();
  for (std::size_t li = 0; li < graph_.layers.size(); ++li) {
    const auto& p = params_[li];
    for (auto idx : {p.kernel, p.gamma, p.beta, p.weight, p.bias}) {
      if (idx && trainable(mask, w.entry(*idx).name, w.entry(*idx).role)) lowest = std::min(lowest, li);
    }
  }
  if (need_input_grad) lowest = 0;

  Tensor<T> g = grad_logits;
  for (std::size_t li = graph_.layers.size(); li-- > 0;) {
    if (li < lowest) break;
    const bool below = li > lowest || need_input_grad;
    const auto& spec = graph_.layers[li];
    auto& c = cache_[li];
    const auto& p = params_[li];
    auto want = [&](std::optional<std::size_t> idx) {
      return idx && trainable(mask, w.entry(*idx).name, w.entry(*idx).role);
    };
    switch (spec.kind) {
      case LayerKind::dense_head: {
        auto dg = dense_backward(c.input, w.entry(*p.weight).value, g, below);
        if (want(p.weight)) out.params[*p.weight] = std::move(dg.weight);
        if (want(p.bias)) out.params[*p.bias] = std::move(dg.bias);
        g = std::move(dg.input);
        break;
      }
      case LayerKind::global_avgpool:
        g = global_avgpool_backward(g, c.input.shape());
        break;
      case LayerKind::maxpool:
        g = maxpool_backward(g, c.pool);
        break;
      case LayerKind::conv_bn_relu: {
        g = relu_backward(c.output, g);
        auto bg = batchnorm_backward(g, w.entry(*p.gamma).value, c.bn, true);
        if (want(p.gamma)) out.params[*p.gamma] = std::move(bg.gamma);
        if (want(p.beta)) out.params[*p.beta] = std::move(bg.beta);
        auto cg = conv2d_backward(c.input, w.entry(*p.kernel).value, bg.input, below, &c.cols);
        if (want(p.kernel)) out.params[*p.kernel] = std::move(cg.kernel);
        g = std::move(cg.input);
        break;
      }
    }
  }
  if (need_input_grad) out.input = std::move(g);
  return out;
}

template <typename T>
std::uint64_t Network<T>::regime_signature() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t li = 0; li <= last_layer_; ++li) {
    const auto& spec = graph_.layers[li];
    const auto& c = cache_[li];
    if (spec.kind == LayerKind::conv_bn_relu) {
      std::string bits(c.output.size(), '0');
      for (std::size_t i = 0; i < c.output.size(); ++i) bits[i] = c.output[i] > T{0} ? '1' : '0';
      h = fnv1a64(bits, h);
    } else if (spec.kind == LayerKind::maxpool) {
      h = fnv1a64(std::string_view(reinterpret_cast<const char*>(c.pool.argmax.data()),
                                   c.pool.argmax.size() * sizeof(std::uint32_t)),
                  h);
    }
  }
  return h;
}

template class Network<float>;
template class Network<double>;

}  // namespace trlab::nn
