#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "trlab/nn/network.hpp"
#include "trlab/rng.hpp"

namespace trlab::nn {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // coordinates whose perturbation crossed a kink
};

/// Scalar objective evaluated at the current coordinate values. When
/// `regime` is non-null the objective writes a signature of its piecewise
/// regime (relu masks, pool argmax); perturbed evaluations whose signature
/// differs from the base evaluation are skipped.
using Objective = std::function<double(std::uint64_t* regime)>;

/// Central differences (f(x+h) - f(x-h)) / 2h at up to `max_coords` randomly
/// chosen coordinates, compared against `analytic` with relative error
/// |a - n| / max(|a|, |n|, 1e-6).
GradCheckResult grad_check(const Objective& objective, const std::vector<double*>& coords,
                           const std::vector<double>& analytic, std::size_t max_coords, RngStream& stream,
                           double h = 1e-5);

/// End-to-end check of a graph through the multi-label loss in train-mode
/// batch norm: parameters and input pixels are both sampled. Moving
/// statistics are restored after every evaluation.
GradCheckResult graph_grad_check(const ModelGraph& graph, BasicWeightStore<double> weights,
                                 const TensorD& input, const TensorD& labels, std::size_t max_coords,
                                 std::uint64_t seed, double h = 1e-5);

}  // namespace trlab::nn
