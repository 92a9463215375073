#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "trlab/container.hpp"
#include "trlab/tensor.hpp"

namespace trlab {

inline constexpr const char* kGeneratorVersion = "2";
/// Fixed input normalization applied before the network: (x - mean) / std.
inline constexpr float kNormMean = 0.5f;
inline constexpr float kNormStd = 0.25f;

struct DatasetBundle {
  TensorF images;                        // N x H x W x C, values in [0, 1]
  TensorF labels;                        // N x num_classes, multi-hot
  std::vector<std::uint64_t> group_ids;  // one per example
  Metadata metadata;                     // kind, seed, generator_version, norm_mean, norm_std

  std::size_t size() const { return group_ids.size(); }
  std::size_t num_classes() const { return labels.rank() == 2 ? labels.dim(1) : 0; }

  /// Examples at `indices`, in that order.
  DatasetBundle select(std::span<const std::size_t> indices) const;
  /// Throws when shapes, label values or group ids are inconsistent.
  void validate() const;
};

enum class SynthKind { local_dots, global_shape };

SynthKind parse_synth_kind(const std::string& name);
const char* synth_kind_name(SynthKind kind);

struct SynthTaskConfig {
  SynthKind kind = SynthKind::local_dots;
  std::size_t n = 1000;
  std::size_t image_size = 64;
  std::size_t num_classes = 5;
  double dot_radius = 1.0;
  std::size_t dots_per_class = 2;
  double noise_level = 0.16;
  std::size_t group_size = 4;  // images per synthetic patient
  std::uint64_t seed = 0;
};

/// Textured background with g * dots_per_class small dark dots, grade g
/// uniform in [0, num_classes]; label c is "grade > c". Also records
/// per-example dot counts in metadata-free tensor "dot_counts" via `dot_counts`.
DatasetBundle synth_local_dots(const SynthTaskConfig& config, std::vector<std::size_t>* dot_counts = nullptr);

/// One large centered shape over noise; class = shape identity (one-hot).
DatasetBundle synth_global_shape(const SynthTaskConfig& config);

DatasetBundle synth_dataset(const SynthTaskConfig& config);

struct Split {
  DatasetBundle train, test;
};

/// Partitions whole groups; no group appears on both sides.
Split split_by_group(const DatasetBundle& bundle, double test_fraction, std::uint64_t seed);

/// Group-respecting subsample of approximately n examples.
DatasetBundle subset(const DatasetBundle& bundle, std::size_t n, std::uint64_t seed);

void save_dataset(const std::filesystem::path& path, const DatasetBundle& bundle);
/// Rejects files whose generator_version differs from kGeneratorVersion.
DatasetBundle load_dataset(const std::filesystem::path& path);

/// Area under the ROC curve via rank sums with averaged tie ranks
/// (Mann-Whitney; each tied positive/negative pair counts 1/2).
/// Throws if only one label value is present or a score is non-finite.
double auc_roc(std::span<const double> scores, std::span<const double> labels);

/// Per-class AUC of column c; absent when column c holds a single label value.
std::vector<std::optional<double>> per_class_auc(const TensorD& scores, const TensorF& labels);

/// Mean of the present entries; absent when none are present.
std::optional<double> mean_auc(const std::vector<std::optional<double>>& aucs);

}  // namespace trlab
