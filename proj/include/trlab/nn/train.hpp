#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "trlab/data.hpp"
#include "trlab/nn/network.hpp"
#include "trlab/nn/optim.hpp"
#include "trlab/weights.hpp"
#include "trlab/zoo.hpp"

namespace trlab::nn {

/// Which AUC a threshold refers to: the mean over present classes, or one class.
struct AucMetric {
  std::optional<std::size_t> class_index;  // nullopt = mean

  static AucMetric parse(const std::string& text);  // "mean" or "class:<k>"
  std::string str() const;
};

struct LogEntry {
  std::size_t step = 0;
  double loss = 0.0;                         // mean train loss since the previous entry
  std::vector<std::optional<double>> auc;    // per class, absent when undefined
  double lr = 0.0;
  double seconds_per_step = 0.0;             // wall clock, informational only
};

struct TrainingLog {
  std::vector<LogEntry> entries;
  std::string config_fingerprint;

  std::optional<double> metric(const LogEntry& e, const AucMetric& m) const;
  /// Header `step,loss,auc_0,...,auc_{C-1},lr`; absent AUCs are empty cells.
  std::string csv() const;
  void write_csv(const std::filesystem::path& path) const;
  static TrainingLog read_csv(const std::filesystem::path& path);
};

struct StopRule {
  AucMetric metric;
  double threshold = 0.85;
};

struct TrainConfig {
  OptimizerConfig optimizer;
  LrSchedule schedule;         // steps_per_epoch 0 means "derive from dataset and batch"
  std::size_t batch = 8;
  std::size_t steps = 0;
  std::uint64_t seed = 0;
  bool hflip = false;
  bool vflip = false;
  std::size_t eval_every = 100;
  std::size_t eval_max = 0;    // 0 = whole evaluation set
  std::size_t eval_batch = 64;
  std::optional<StopRule> stop;
  BnHyper bn;
};

struct TrainResult {
  WeightStore weights;
  TrainingLog log;
  std::size_t steps_run = 0;
};

using ProgressFn = std::function<void(const LogEntry&)>;

/// Minibatch training. Each epoch visits a fresh seeded permutation in full
/// batches; entries are logged at step 0 and every eval_every steps (and at
/// the final step). Tensors masked false are never modified, and conv blocks
/// whose moving statistics are masked run batch norm in inference mode.
TrainResult train(const ModelGraph& graph, WeightStore weights, const DatasetBundle& train_set,
                  const DatasetBundle& eval_set, const TrainConfig& config, const FreezeMask* mask = nullptr,
                  const ProgressFn& progress = {});

struct EvalResult {
  std::vector<std::optional<double>> auc;
  std::optional<double> mean_auc;
  double mean_loss = 0.0;
  TensorD scores;  // logits, N x C
};

/// Inference-mode evaluation over `limit` leading examples (0 = all).
EvalResult evaluate(const ModelGraph& graph, const WeightStore& weights, const DatasetBundle& data,
                    std::size_t batch = 64, std::size_t limit = 0, BnHyper bn = {});

/// Normalized network input for the examples at `indices`.
TensorF make_batch(const DatasetBundle& data, std::span<const std::size_t> indices);

}  // namespace trlab::nn
