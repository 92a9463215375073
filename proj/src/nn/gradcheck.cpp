#include "trlab/nn/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace trlab::nn {

GradCheckResult grad_check(const Objective& objective, const std::vector<double*>& coords,
                           const std::vector<double>& analytic, std::size_t max_coords, RngStream& stream,
                           double h) {
  if (coords.size() != analytic.size()) throw ShapeError("grad_check: coordinate/gradient count mismatch");
  GradCheckResult out;
  std::uint64_t base_regime = 0;
  objective(&base_regime);
  const auto order = rng_permutation(stream, coords.size());
  for (std::size_t k = 0; k < order.size() && out.checked < max_coords; ++k) {
    const std::size_t i = order[k];
    double* x = coords[i];
    const double x0 = *x;
    std::uint64_t rp = 0, rm = 0;
    *x = x0 + h;
    const double fp = objective(&rp);
    *x = x0 - h;
    const double fm = objective(&rm);
    *x = x0;
    if (rp != base_regime || rm != base_regime) {
      ++out.skipped;
      continue;
    }
    const double num = (fp - fm) / (2.0 * h);
    const double a = analytic[i];
    const double rel = std::abs(a - num) / std::max({std::abs(a), std::abs(num), 1e-6});
    out.max_rel_error = std::max(out.max_rel_error, rel);
    ++out.checked;
  }
  return out;
}

GradCheckResult graph_grad_check(const ModelGraph& graph, BasicWeightStore<double> weights, const TensorD& input,
                                 const TensorD& labels, std::size_t max_coords, std::uint64_t seed, double h) {
  Network<double> net(graph);
  const BasicWeightStore<double> pristine = weights;

  auto restore_stats = [&] {
    for (std::size_t i = 0; i < weights.size(); ++i) {
      auto& e = weights.entry(i);
      if (!is_trainable(e.role)) e.value = pristine.entry(i).value;
    }
  };

  TensorD x = input;
  const TensorD logits = net.forward(x, weights, BnMode::train);
  restore_stats();
  const auto loss = multilabel_bce(logits, labels);
  auto grads = net.backward(loss.grad, weights, nullptr, /*need_input_grad=*/true);

  std::vector<double*> coords;
  std::vector<double> analytic;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    auto& e = weights.entry(i);
    if (!is_trainable(e.role)) continue;
    for (std::size_t k = 0; k < e.value.size(); ++k) {
      coords.push_back(&e.value[k]);
      analytic.push_back(grads.params[i][k]);
    }
  }
  for (std::size_t k = 0; k < x.size(); ++k) {
    coords.push_back(&x[k]);
    analytic.push_back(grads.input[k]);
  }

  Objective f = [&](std::uint64_t* regime) {
    const TensorD z = net.forward(x, weights, BnMode::train);
    restore_stats();
    if (regime) *regime = net.regime_signature();
    return multilabel_bce(z, labels).loss;
  };
  RngStream stream(seed, "gradcheck/coords");
  return grad_check(f, coords, analytic, max_coords, stream, h);
}

}  // namespace trlab::nn
