#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "trlab/tensor.hpp"

namespace trlab::nn {

enum class OptimizerKind { sgd_momentum, adam };

OptimizerKind parse_optimizer(const std::string& name);
const char* optimizer_name(OptimizerKind kind);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// SGD with momentum (v <- mu v + g; p <- p - lr v) or Adam with bias
/// correction. Slots are allocated on first use per parameter index.
template <typename T>
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig config = {}) : config_(config) {}

  const OptimizerConfig& config() const noexcept { return config_; }
  std::size_t step_count() const noexcept { return steps_; }

  /// One update of every parameter whose gradient pointer is non-null.
  /// params[i] and grads[i] must agree in shape.
  void step(const std::vector<Tensor<T>*>& params, const std::vector<const Tensor<T>*>& grads, double lr);

  /// Slot tensors of parameter i (one for SGD, two for Adam); empty if unused.
  std::vector<const Tensor<T>*> slots(std::size_t i) const;

 private:
  struct Slot {
    Tensor<T> m, v;
    bool used = false;
  };

  OptimizerConfig config_;
  std::vector<Slot> slots_;
  std::size_t steps_ = 0;
};

enum class ScheduleKind { constant, warmup_step };

ScheduleKind parse_schedule(const std::string& name);
const char* schedule_name(ScheduleKind kind);

struct LrSchedule {
  ScheduleKind kind = ScheduleKind::constant;
  double base_lr = 1e-3;
  double warmup_epochs = 0;
  std::vector<double> decay_epochs;
  double decay_factor = 10.0;
  std::size_t steps_per_epoch = 1;

  /// Linear warmup from 0 to base over warmup_epochs, then base divided by
  /// decay_factor once for every decay epoch already reached.
  double lr_at(std::size_t global_step) const;
};

/// The ImageNet-style schedule: 5 warmup epochs to 0.1 * batch / 256, then
/// tenfold decays at epochs 30, 60 and 90.
LrSchedule chexpert_schedule(std::size_t steps_per_epoch, std::size_t batch = 32);

}  // namespace trlab::nn
