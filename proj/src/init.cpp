#include "trlab/init.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "trlab/rng.hpp"

namespace trlab {

BnVariant parse_bn_variant(const std::string& name) {
  if (name == "bn-identity" || name == "identity") return BnVariant::identity;
  if (name == "bn-meanvar" || name == "meanvar") return BnVariant::meanvar;
  if (name == "bn-transfer" || name == "transfer") return BnVariant::transfer;
  throw InvalidArgument("unknown batch-norm variant '" + name + "' (expected bn-identity, bn-meanvar or bn-transfer)");
}

const char* bn_variant_name(BnVariant v) {
  switch (v) {
    case BnVariant::identity: return "bn-identity";
    case BnVariant::meanvar: return "bn-meanvar";
    case BnVariant::transfer: return "bn-transfer";
  }
  return "?";
}

MeanVarParams mean_var_of(const TensorF& t) {
  if (t.size() == 0) throw InvalidArgument("mean/variance of an empty tensor");
  double sum = 0;
  for (float v : t.data()) sum += v;
  const double mu = sum / static_cast<double>(t.size());
  double ss = 0;
  for (float v : t.data()) ss += (v - mu) * (v - mu);
  return {mu, ss / static_cast<double>(t.size())};
}

namespace {

RngStream stream_for(std::uint64_t seed, const std::string& scheme, const std::string& tensor) {
  return RngStream(seed, "init/" + scheme + "/" + tensor);
}

bool is_feature_tensor(Role r) { return r == Role::kernel || r == Role::dense_weight || r == Role::dense_bias; }

std::size_t fan_in(const Shape& s, Role r) {
  if (r == Role::kernel) return s[0] * s[1] * s[2];
  if (r == Role::dense_weight) return s[0];
  return 0;
}

void init_tensor_random(WeightStore::Entry& e, std::uint64_t seed, std::size_t head_fan_in) {
  switch (e.role) {
    case Role::kernel: {
      auto s = stream_for(seed, "random", e.name);
      e.value = rng_truncated_normal(s, std::sqrt(2.0 / static_cast<double>(fan_in(e.value.shape(), e.role))),
                                     e.value.shape());
      break;
    }
    case Role::dense_weight:
    case Role::dense_bias: {
      auto s = stream_for(seed, "random", e.name);
      const double b = 1.0 / std::sqrt(static_cast<double>(head_fan_in));
      e.value = rng_uniform(s, -b, b, e.value.shape());
      break;
    }
    case Role::gamma:
    case Role::moving_var: e.value.fill(1.0f); break;
    case Role::beta:
    case Role::moving_mean: e.value.fill(0.0f); break;
  }
}

std::size_t head_fan_in(const WeightStore& store) {
  for (const auto& e : store.entries())
    if (e.role == Role::dense_weight) return e.value.dim(0);
  return 1;
}

template <typename Fn>
WeightStore from_donor(const WeightStore& donor, const ModelGraph& graph, std::uint64_t seed, BnVariant bn, Fn&& fn) {
  check_store_matches(donor, graph);
  WeightStore out(graph);
  for (std::size_t i = 0; i < out.size(); ++i) {
    auto& e = out.entry(i);
    if (is_feature_tensor(e.role)) fn(e, donor.entry(i).value);
  }
  bn_variant_init(out, bn, &donor, graph, seed);
  return out;
}

}  // namespace

WeightStore random_init(const ModelGraph& graph, std::uint64_t seed) {
  WeightStore out(graph);
  const std::size_t hf = head_fan_in(out);
  for (auto& e : out.entries()) init_tensor_random(e, seed, hf);
  return out;
}

void random_init_layers(WeightStore& store, const ModelGraph& graph, const std::vector<std::string>& layers,
                        std::uint64_t seed) {
  check_store_matches(store, graph);
  const std::set<std::string> want(layers.begin(), layers.end());
  for (const auto& l : want) graph.require_index(l);
  const std::size_t hf = head_fan_in(store);
  for (auto& e : store.entries())
    if (want.count(e.layer)) init_tensor_random(e, seed, hf);
}

WeightStore mean_var_init(const WeightStore& donor, const ModelGraph& graph, std::uint64_t seed, BnVariant bn) {
  return from_donor(donor, graph, seed, bn, [&](WeightStore::Entry& e, const TensorF& src) {
    const auto p = mean_var_of(src);
    auto s = stream_for(seed, "meanvar", e.name);
    e.value = rng_normal(s, p.mu, std::sqrt(p.sigma_sq), src.shape());
  });
}

WeightStore sampling_init(const WeightStore& donor, const ModelGraph& graph, std::uint64_t seed, BnVariant bn) {
  return from_donor(donor, graph, seed, bn, [&](WeightStore::Entry& e, const TensorF& src) {
    auto s = stream_for(seed, "sample", e.name);
    for (std::size_t k = 0; k < e.value.size(); ++k) e.value[k] = src[s.below(src.size())];
  });
}

WeightStore shuffled_init(const WeightStore& donor, const ModelGraph& graph, std::uint64_t seed, BnVariant bn) {
  return from_donor(donor, graph, seed, bn, [&](WeightStore::Entry& e, const TensorF& src) {
    auto s = stream_for(seed, "shuffle", e.name);
    const auto perm = rng_permutation(s, src.size());
    for (std::size_t k = 0; k < perm.size(); ++k) e.value[k] = src[perm[k]];
  });
}

void bn_variant_init(WeightStore& store, BnVariant variant, const WeightStore* donor, const ModelGraph& graph,
                     std::uint64_t seed, const std::vector<std::string>& layers) {
  check_store_matches(store, graph);
  if (variant != BnVariant::identity) {
    if (!donor) throw InvalidArgument(std::string(bn_variant_name(variant)) + " requires a donor");
    check_store_matches(*donor, graph);
  }
  const std::set<std::string> only(layers.begin(), layers.end());
  for (std::size_t i = 0; i < store.size(); ++i) {
    auto& e = store.entry(i);
    if (!is_bn_role(e.role)) continue;
    if (!only.empty() && !only.count(e.layer)) continue;
    switch (variant) {
      case BnVariant::identity:
        e.value.fill(e.role == Role::gamma || e.role == Role::moving_var ? 1.0f : 0.0f);
        break;
      case BnVariant::transfer:
        e.value = donor->entry(i).value;
        break;
      case BnVariant::meanvar: {
        const TensorF& src = donor->entry(i).value;
        const auto p = mean_var_of(src);
        auto s = stream_for(seed, "bn-meanvar", e.name);
        e.value = rng_normal(s, p.mu, std::sqrt(p.sigma_sq), src.shape());
        if (e.role == Role::moving_var)
          for (auto& v : e.value.vec()) v = std::abs(v);
        break;
      }
    }
  }
}

bool is_known_scheme(const std::string& scheme) {
  return scheme == "random" || scheme == "meanvar" || scheme == "sample" || scheme == "shuffle" ||
         scheme == "gabor-conv1";
}

WeightStore init_scheme(const std::string& scheme, const ModelGraph& graph, const WeightStore* donor,
                        std::uint64_t seed, BnVariant bn, const GaborConfig& gabor) {
  auto need_donor = [&]() -> const WeightStore& {
    if (!donor) throw InvalidArgument("init scheme '" + scheme + "' requires a donor");
    return *donor;
  };
  WeightStore out;
  if (scheme == "random" || scheme == "gabor-conv1") {
    out = random_init(graph, seed);
    if (bn != BnVariant::identity) bn_variant_init(out, bn, donor, graph, seed);
    if (scheme == "gabor-conv1") {
      const std::string name = graph.conv_layer_names().at(0) + "/kernel";
      const TensorF reference = donor ? donor->at(name) : out.at(name);
      GaborConfig fitted = gabor;
      fitted.kernel_crop = out.at(name).dim(0);
      fitted.kernel_resize = std::max(fitted.kernel_resize, fitted.kernel_crop);
      out = apply_conv1_gabor(out, graph, fitted, reference);
    }
  } else if (scheme == "meanvar") {
    out = mean_var_init(need_donor(), graph, seed, bn);
  } else if (scheme == "sample") {
    out = sampling_init(need_donor(), graph, seed, bn);
  } else if (scheme == "shuffle") {
    out = shuffled_init(need_donor(), graph, seed, bn);
  } else {
    throw InvalidArgument("unknown init scheme '" + scheme +
                          "' (expected random, meanvar, sample, shuffle or gabor-conv1)");
  }
  return out;
}

}  // namespace trlab
