#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "trlab/weights.hpp"
#include "trlab/zoo.hpp"

namespace trlab {

enum class BnVariant { identity, meanvar, transfer };

BnVariant parse_bn_variant(const std::string& name);  // bn-identity | bn-meanvar | bn-transfer
const char* bn_variant_name(BnVariant v);

/// Per-tensor population mean and variance.
struct MeanVarParams {
  double mu = 0.0;
  double sigma_sq = 0.0;
};
MeanVarParams mean_var_of(const TensorF& t);

/// He-style truncated normal (std sqrt(2 / fan_in), cut at two std) for conv
/// kernels, uniform +-1/sqrt(fan_in) for the dense head, identity batch norm.
WeightStore random_init(const ModelGraph& graph, std::uint64_t seed);

/// Initializes the tensors of `layers` only (by layer name), drawing from
/// the same per-tensor streams random_init uses.
void random_init_layers(WeightStore& store, const ModelGraph& graph, const std::vector<std::string>& layers,
                        std::uint64_t seed);

/// Every kernel and dense tensor drawn iid N(mu~, sigma~^2) from the matching
/// donor tensor; batch norm governed by `bn`.
WeightStore mean_var_init(const WeightStore& donor, const ModelGraph& graph, std::uint64_t seed,
                          BnVariant bn = BnVariant::identity);

/// Each kernel/dense value drawn uniformly with replacement from the donor tensor.
WeightStore sampling_init(const WeightStore& donor, const ModelGraph& graph, std::uint64_t seed,
                          BnVariant bn = BnVariant::identity);

/// Each kernel/dense tensor a random permutation of the donor tensor.
WeightStore shuffled_init(const WeightStore& donor, const ModelGraph& graph, std::uint64_t seed,
                          BnVariant bn = BnVariant::identity);

/// Rewrites the batch-norm tensors of `store` (all conv blocks, or only
/// `layers` when non-empty). Identity: gamma 1, beta 0, mean 0, var 1.
/// MeanVar: iid normal from each donor tensor's mean/variance (variances
/// folded to non-negative). Transfer: bitwise copies.
void bn_variant_init(WeightStore& store, BnVariant variant, const WeightStore* donor, const ModelGraph& graph,
                     std::uint64_t seed, const std::vector<std::string>& layers = {});

// ---- synthetic Gabor filters ----

struct GaborConfig {
  std::size_t n_angles = 16;
  std::vector<double> sigmas{2.0};
  std::vector<double> freqs{0.08, 0.16, 0.25, 0.32};
  std::size_t kernel_resize = 10;
  std::size_t kernel_crop = 7;
  double nstds = 3.0;

  std::size_t bank_size() const { return n_angles * sigmas.size() * freqs.size(); }
};

/// Real part of the isotropic Gabor kernel on the integer grid
/// [-y0, y0] x [-x0, x0]; rows index y.
TensorD gabor_kernel(double frequency, double theta, double sigma, double nstds = 3.0);

/// Bilinear resize with half-pixel centers and edge clamping, no anti-aliasing.
TensorD resize_bilinear(const TensorD& image, std::size_t out_h, std::size_t out_w);

/// Center crop keeping rows/cols [delta/2, size - (delta - delta/2)).
TensorD center_crop(const TensorD& image, std::size_t crop);

struct GaborStages {
  TensorD raw, resized, cropped;  // resized equals raw when no resize applies
};
GaborStages gabor_filter(const GaborConfig& config, double sigma, double frequency, double theta);

/// n x crop x crop filters ordered by sigma, then frequency, then angle
/// theta = k * pi / n_angles.
TensorD gabor_bank(const GaborConfig& config);

/// Multiplies the bank by std(reference) / std(bank).
TensorD scale_to_match(const TensorD& bank, const TensorF& reference, double* scale_out = nullptr);

/// Sets conv1 to the scaled bank repeated across input channels.
WeightStore apply_conv1_gabor(const WeightStore& weights, const ModelGraph& graph, const GaborConfig& config,
                              const TensorF& reference);

// ---- scheme dispatch ----

/// Scheme names: random, meanvar, sample, shuffle, gabor-conv1.
/// `donor` is required by meanvar/sample/shuffle and by bn-meanvar/bn-transfer;
/// gabor-conv1 scales against the donor conv1 when given, else against its
/// own random conv1, cropping filters to the conv1 kernel size.
WeightStore init_scheme(const std::string& scheme, const ModelGraph& graph, const WeightStore* donor,
                        std::uint64_t seed, BnVariant bn = BnVariant::identity,
                        const GaborConfig& gabor = {});

bool is_known_scheme(const std::string& scheme);

}  // namespace trlab
