#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "trlab/tensor.hpp"

namespace trlab {

enum class LayerKind { conv_bn_relu, maxpool, global_avgpool, dense_head };

const char* layer_kind_name(LayerKind kind);

struct LayerSpec {
  LayerKind kind;
  int kernel_size = 0;   // conv only
  int out_channels = 0;  // conv and dense head
  std::string name;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct InputShape {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;

  friend bool operator==(const InputShape&, const InputShape&) = default;
};

struct ModelGraph {
  std::vector<LayerSpec> layers;
  InputShape input;
  std::size_t num_classes = 0;
  std::string variant_tag;

  std::optional<std::size_t> index_of(std::string_view name) const;
  /// Throws InvalidArgument for unknown names.
  std::size_t require_index(std::string_view name) const;
  const LayerSpec& layer(std::string_view name) const;
  std::vector<std::string> conv_layer_names() const;

  /// Canonical text form of the ordered layer list and geometry.
  std::string serialize() const;
  /// Stable hash of serialize(); stored in checkpoints to reject mismatched loads.
  std::string fingerprint() const;

  friend bool operator==(const ModelGraph&, const ModelGraph&) = default;
};

enum class CbrVariant { LargeT, LargeW, Small, Tiny, SmallDesk, TinyDesk };

CbrVariant parse_cbr_variant(std::string_view name);
const char* cbr_variant_name(CbrVariant v);

/// Inverse of ModelGraph::serialize(); validates the result.
ModelGraph deserialize_graph(std::string_view text, std::string variant_tag = "");

/// Builds a CBR-family graph; validates that every maxpool sees spatial dims >= 3.
ModelGraph build_cbr(CbrVariant variant, InputShape input, std::size_t num_classes);

/// Validates structural invariants (unique names, head preceded by global
/// avgpool, uniform conv kernel size, pool inputs >= 3).
void validate_graph(const ModelGraph& graph);

enum class Role { kernel, gamma, beta, moving_mean, moving_var, dense_weight, dense_bias };

const char* role_name(Role role);
Role parse_role(std::string_view name);
inline bool is_trainable(Role r) { return r != Role::moving_mean && r != Role::moving_var; }
inline bool is_bn_role(Role r) {
  return r == Role::gamma || r == Role::beta || r == Role::moving_mean || r == Role::moving_var;
}

/// One tensor the graph owns.
struct TensorDecl {
  std::string name;   // "<layer>/<suffix>"
  std::string layer;
  Role role;
  Shape shape;
};

/// Every tensor of the graph in layer order, moving statistics included.
std::vector<TensorDecl> parameter_layout(const ModelGraph& graph);

/// Trainable parameter count (moving statistics excluded).
std::size_t param_count(const ModelGraph& graph);

/// Output geometry (h, w, c) of every layer, in layer order.
struct LayerGeometry {
  std::size_t height, width, channels;
};
std::vector<LayerGeometry> layer_geometry(const ModelGraph& graph);

/// Shrinks out_channels of every conv at/after `from_layer` by `width_factor`
/// (rounded down). Layers before from_layer are untouched.
ModelGraph slim(const ModelGraph& graph, std::string_view from_layer, double width_factor = 0.5);

inline std::size_t pooled_extent(std::size_t in) { return (in + 1) / 2; }

}  // namespace trlab
