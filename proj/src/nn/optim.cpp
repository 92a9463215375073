#include "trlab/nn/optim.hpp"

#include <cmath>

namespace trlab::nn {

OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "adam") return OptimizerKind::adam;
  if (name == "sgd" || name == "sgd_momentum" || name == "sgd-momentum") return OptimizerKind::sgd_momentum;
  throw InvalidArgument("unknown optimizer '" + name + "' (expected adam or sgd)");
}

const char* optimizer_name(OptimizerKind kind) {
  return kind == OptimizerKind::adam ? "adam" : "sgd";
}

template <typename T>
void Optimizer<T>::step(const std::vector<Tensor<T>*>& params, const std::vector<const Tensor<T>*>& grads,
                        double lr) {
  if (params.size() != grads.size())
    throw ShapeError("optimizer: " + std::to_string(params.size()) + " params but " +
                     std::to_string(grads.size()) + " gradients");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i] && params[i]->shape() != grads[i]->shape())
      throw ShapeError("optimizer: parameter " + std::to_string(i) + " has shape " +
                       shape_str(params[i]->shape()) + " but gradient " + shape_str(grads[i]->shape()));
  }
  if (slots_.size() < params.size()) slots_.resize(params.size());
  ++steps_;

  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));

  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!grads[i]) continue;
    Tensor<T>& p = *params[i];
    const Tensor<T>& g = *grads[i];
    Slot& s = slots_[i];
    if (!s.used) {
      s.m = Tensor<T>(p.shape());
      if (config_.kind == OptimizerKind::adam) s.v = Tensor<T>(p.shape());
      s.used = true;
    } else if (s.m.shape() != p.shape()) {
      throw ShapeError("optimizer slot shape changed for parameter " + std::to_string(i));
    }
    const std::size_t n = p.size();
    if (config_.kind == OptimizerKind::sgd_momentum) {
      const double mu = config_.momentum;
      for (std::size_t k = 0; k < n; ++k) {
        const double v = mu * static_cast<double>(s.m[k]) + static_cast<double>(g[k]);
        s.m[k] = static_cast<T>(v);
        p[k] = static_cast<T>(static_cast<double>(p[k]) - lr * v);
      }
    } else {
      for (std::size_t k = 0; k < n; ++k) {
        const double gk = g[k];
        const double m = b1 * static_cast<double>(s.m[k]) + (1.0 - b1) * gk;
        const double v = b2 * static_cast<double>(s.v[k]) + (1.0 - b2) * gk * gk;
        s.m[k] = static_cast<T>(m);
        s.v[k] = static_cast<T>(v);
        const double mhat = m / c1, vhat = v / c2;
        p[k] = static_cast<T>(static_cast<double>(p[k]) - lr * mhat / (std::sqrt(vhat) + config_.epsilon));
      }
    }
  }
}

template <typename T>
std::vector<const Tensor<T>*> Optimizer<T>::slots(std::size_t i) const {
  std::vector<const Tensor<T>*> out;
  if (i >= slots_.size() || !slots_[i].used) return out;
  out.push_back(&slots_[i].m);
  if (config_.kind == OptimizerKind::adam) out.push_back(&slots_[i].v);
  return out;
}

template class Optimizer<float>;
template class Optimizer<double>;

ScheduleKind parse_schedule(const std::string& name) {
  if (name == "constant") return ScheduleKind::constant;
  if (name == "warmup_step" || name == "warmup-step") return ScheduleKind::warmup_step;
  throw InvalidArgument("unknown schedule '" + name + "' (expected constant or warmup_step)");
}

const char* schedule_name(ScheduleKind kind) {
  return kind == ScheduleKind::constant ? "constant" : "warmup_step";
}

double LrSchedule::lr_at(std::size_t global_step) const {
  if (kind == ScheduleKind::constant) return base_lr;
  const double spe = static_cast<double>(steps_per_epoch == 0 ? 1 : steps_per_epoch);
  const double epoch = static_cast<double>(global_step) / spe;
  if (warmup_epochs > 0 && epoch < warmup_epochs) return base_lr * (epoch / warmup_epochs);
  int k = 0;
  for (double d : decay_epochs)
    if (epoch >= d) ++k;
  double lr = base_lr;
  if (k > 0) lr = base_lr / std::pow(decay_factor, k);
  return lr;
}

LrSchedule chexpert_schedule(std::size_t steps_per_epoch, std::size_t batch) {
  LrSchedule s;
  s.kind = ScheduleKind::warmup_step;
  s.base_lr = 0.1 * static_cast<double>(batch) / 256.0;
  s.warmup_epochs = 5;
  s.decay_epochs = {30, 60, 90};
  s.decay_factor = 10.0;
  s.steps_per_epoch = steps_per_epoch;
  return s;
}

}  // namespace trlab::nn
