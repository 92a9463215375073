#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "trlab/data.hpp"
#include "trlab/rng.hpp"
#include "trlab/weights.hpp"
#include "trlab/zoo.hpp"

namespace trlab {

struct CcaResult {
  std::vector<double> correlations;  // descending, each in [0, 1]
  double similarity = 0.0;           // mean of correlations
  std::size_t kept_x = 0, kept_y = 0;
};

/// Canonical correlations between the rows of X (d1 x m) and Y (d2 x m):
/// singular values of Sxx^-1/2 Sxy Syy^-1/2 with epsilon added to the
/// diagonal of each auto-covariance. Throws ConditioningError when an
/// auto-covariance is numerically singular.
CcaResult cca(const TensorD& X, const TensorD& Y, double epsilon = 1e-6);

/// Keeps, per matrix, the fewest top singular directions carrying at least
/// `variance_threshold` of the squared singular-value mass, then applies cca.
CcaResult svcca(const TensorD& X, const TensorD& Y, double variance_threshold = 0.99, double epsilon = 1e-6);

/// Number of leading singular directions svcca keeps for X.
std::size_t svcca_rank(const TensorD& X, double variance_threshold);

struct CcaSamplingConfig {
  std::size_t p = 10000;
  std::size_t d = 64;
  std::size_t reps = 10;
  double variance_threshold = 0.99;
  double epsilon = 1e-6;

  void validate() const;
};

struct ActivationMatrix {
  TensorD values;  // channels x samples
  std::string layer, checkpoint, plan;
  std::vector<std::size_t> datapoints, channels;
};

/// Datapoints n' = ceil(p / (h w)) chosen without replacement (all when
/// fewer exist), returned in increasing order.
std::vector<std::size_t> choose_datapoints(std::size_t n, std::size_t h, std::size_t w, std::size_t p,
                                           RngStream& stream);

/// min(d, c) channels chosen without replacement, increasing order.
std::vector<std::size_t> choose_channels(std::size_t c, std::size_t d, RngStream& stream);

/// Rows are the chosen channels; columns run over (datapoint, y, x).
ActivationMatrix gather_activations(const TensorF& acts, const std::vector<std::size_t>& datapoints,
                                    const std::vector<std::size_t>& channels);

/// One draw of the patch plan and channel subset from `stream`.
ActivationMatrix sample_conv_activations(const TensorF& acts, const CcaSamplingConfig& config, RngStream& stream);

struct AggregatedCca {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation across repetitions
  std::vector<double> similarities;
};

/// Repetition r uses streams derived from (master_seed, label + "/rep/r"):
/// one shared datapoint plan, independent channel draws for A and B.
AggregatedCca conv_layer_cca(const TensorF& acts_a, const TensorF& acts_b, const CcaSamplingConfig& config,
                             std::uint64_t master_seed, const std::string& label = "cca");

/// Inference-mode output of `layer` for every example of `data`, n x h x w x c
/// (the dense head yields n x 1 x 1 x classes).
TensorF capture_activations(const ModelGraph& graph, const WeightStore& weights, const DatasetBundle& data,
                            const std::string& layer, std::size_t batch = 64);

void save_activations(const std::filesystem::path& path, const TensorF& acts, const std::string& layer,
                      const std::string& checkpoint_id);

struct StorePair {
  std::string label;
  ModelGraph graph_a;
  WeightStore a;
  ModelGraph graph_b;
  WeightStore b;
};

struct SimilarityRow {
  std::string pair, layer;
  double mean = 0.0, std = 0.0;
  std::size_t reps = 0, p = 0, d = 0;
  double variance_threshold = 0.0, epsilon = 0.0;
};

std::vector<SimilarityRow> similarity_report(const std::vector<StorePair>& pairs,
                                             const std::vector<std::string>& layers, const DatasetBundle& data,
                                             const CcaSamplingConfig& config, std::uint64_t seed);

/// `pair,layer,mean_similarity,std_similarity,reps,p,d,variance_threshold,epsilon`
std::string similarity_csv(const std::vector<SimilarityRow>& rows);

/// Average of the per-layer means of the last `k` conv layers, per pair label.
std::vector<std::pair<std::string, double>> top_layer_similarity(const std::vector<SimilarityRow>& rows,
                                                                 const ModelGraph& graph, std::size_t k = 2);

struct ScatterFit {
  std::vector<std::pair<double, double>> points;
  double r_squared = 0.0;
  double slope = 0.0, intercept = 0.0;
};

/// Ordinary least squares of y on x with intercept.
ScatterFit init_vs_converged_scatter(const std::vector<std::pair<double, double>>& runs);

}  // namespace trlab
