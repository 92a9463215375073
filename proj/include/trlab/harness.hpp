#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "trlab/config.hpp"
#include "trlab/init.hpp"
#include "trlab/nn/train.hpp"
#include "trlab/weights.hpp"
#include "trlab/zoo.hpp"

namespace trlab {

enum class BnStats { copy, reset };

/// Prefix index of a boundary name: nullopt for "none" (empty prefix).
std::optional<std::size_t> boundary_index(const ModelGraph& graph, const std::string& boundary);

/// Tensors of layers [0, L] copied bitwise from the donor (moving statistics
/// reset to mean 0 / var 1 under BnStats::reset); later layers initialized
/// by `remainder_scheme`. The donor may belong to a different graph as long
/// as every prefix tensor matches by name and shape.
WeightStore transfuse(const WeightStore& donor, const ModelGraph& graph, const std::string& boundary,
                      const std::string& remainder_scheme, std::uint64_t seed, BnStats bn_stats = BnStats::copy);

enum class FreezeVariant { full_pretrained, prefix_pretrained_rest_random, random_baseline };

FreezeVariant parse_freeze_variant(const std::string& name);  // full-pretrained | prefix-random | random-baseline
const char* freeze_variant_name(FreezeVariant v);

struct FreezePlan {
  FreezeVariant variant = FreezeVariant::prefix_pretrained_rest_random;
  std::string boundary = "none";
  std::uint64_t seed = 0;
};

struct FrozenInit {
  WeightStore weights;
  FreezeMask mask;  // false for every tensor of layers [0, L]
};

FrozenInit apply_freeze(const FreezePlan& plan, const WeightStore* donor, const ModelGraph& graph,
                        BnStats bn_stats = BnStats::copy);

/// Smallest logged step whose chosen AUC is >= threshold.
std::optional<std::size_t> steps_to_threshold(const nn::TrainingLog& log, const nn::AucMetric& metric,
                                              double threshold);

struct ExperimentResult {
  std::string fingerprint;
  std::filesystem::path dir;
  nn::TrainingLog log;
  std::vector<std::optional<double>> final_auc;
  std::optional<double> final_mean_auc;
  std::optional<std::size_t> steps_to_threshold;
  std::size_t steps_run = 0;
  std::filesystem::path checkpoint;
  bool cached = false;
};

/// Graph the config describes (slimmed when graph.slim_from is set).
ModelGraph config_graph(const ExperimentConfig& config);

/// The train/test split the config describes; generated datasets are
/// cached under <out>/data/.
nn::TrainConfig config_train(const ExperimentConfig& config, std::size_t train_size);
Split config_data(const ExperimentConfig& config);

/// Builds, initializes, trains, evaluates and persists one experiment into
/// <out>/<fingerprint>/. A stored result is returned unless `force`.
ExperimentResult run_experiment(const ExperimentConfig& config, bool force = false,
                                const nn::ProgressFn& progress = {});

/// Transfusion onto a graph slimmed from graph.slim_from, trained end to end.
/// Requires slim_from to come strictly after the boundary unless the factor is 1.
ExperimentResult slim_hybrid(const ExperimentConfig& config, bool force = false);

/// Runs independent experiments on up to `jobs` worker threads; results in input order.
std::vector<ExperimentResult> run_sweep(const std::vector<ExperimentConfig>& configs, std::size_t jobs,
                                        bool force = false);

/// Loads a stored result directory (config, log.csv, result.json).
ExperimentResult load_result(const std::filesystem::path& dir);

struct RunReport {
  /// `run,step,loss,auc_mean,lr` rows, one per log entry of every run.
  std::string curves_csv;
  /// `run,steps_to_threshold,metric,threshold`; unreached thresholds read "absent".
  std::string summary_csv;
  std::size_t curve_rows = 0;
};

RunReport report_runs(const std::vector<std::filesystem::path>& dirs);

}  // namespace trlab
