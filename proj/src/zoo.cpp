#include "trlab/zoo.hpp"

#include <cstdio>

#include <cmath>
#include <set>
#include <sstream>

#include "trlab/rng.hpp"

namespace trlab {

const char* layer_kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv_bn_relu: return "conv_bn_relu";
    case LayerKind::maxpool: return "maxpool";
    case LayerKind::global_avgpool: return "global_avgpool";
    case LayerKind::dense_head: return "dense_head";
  }
  return "?";
}

const char* role_name(Role role) {
  switch (role) {
    case Role::kernel: return "kernel";
    case Role::gamma: return "gamma";
    case Role::beta: return "beta";
    case Role::moving_mean: return "moving_mean";
    case Role::moving_var: return "moving_var";
    case Role::dense_weight: return "dense_weight";
    case Role::dense_bias: return "dense_bias";
  }
  return "?";
}

Role parse_role(std::string_view name) {
  for (Role r : {Role::kernel, Role::gamma, Role::beta, Role::moving_mean, Role::moving_var,
                 Role::dense_weight, Role::dense_bias})
    if (name == role_name(r)) return r;
  throw InvalidArgument("unknown tensor role '" + std::string(name) + "'");
}

std::optional<std::size_t> ModelGraph::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < layers.size(); ++i)
    if (layers[i].name == name) return i;
  return std::nullopt;
}

std::size_t ModelGraph::require_index(std::string_view name) const {
  auto idx = index_of(name);
  if (!idx) throw InvalidArgument("graph " + variant_tag + " has no layer '" + std::string(name) + "'");
  return *idx;
}

const LayerSpec& ModelGraph::layer(std::string_view name) const { return layers[require_index(name)]; }

std::vector<std::string> ModelGraph::conv_layer_names() const {
  std::vector<std::string> out;
  for (const auto& l : layers)
    if (l.kind == LayerKind::conv_bn_relu) out.push_back(l.name);
  return out;
}

std::string ModelGraph::serialize() const {
  std::ostringstream os;
  os << "input=" << input.height << "x" << input.width << "x" << input.channels
     << ";classes=" << num_classes;
  for (const auto& l : layers) {
    os << ";" << l.name << ":" << layer_kind_name(l.kind);
    if (l.kind == LayerKind::conv_bn_relu) os << ":k" << l.kernel_size << ":c" << l.out_channels;
    if (l.kind == LayerKind::dense_head) os << ":c" << l.out_channels;
  }
  return os.str();
}

std::string ModelGraph::fingerprint() const { return hex64(fnv1a64(serialize())); }

ModelGraph deserialize_graph(std::string_view text, std::string variant_tag) {
  auto fail = [&](const std::string& why) -> InvalidArgument {
    return InvalidArgument("malformed graph description (" + why + "): " + std::string(text));
  };
  std::vector<std::string> parts;
  std::string cur;
  for (char ch : text) {
    if (ch == ';') {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  parts.push_back(cur);
  if (parts.size() < 3) throw fail("too few fields");
  ModelGraph g;
  g.variant_tag = std::move(variant_tag);
  unsigned long h = 0, w = 0, c = 0, k = 0;
  if (std::sscanf(parts[0].c_str(), "input=%lux%lux%lu", &h, &w, &c) != 3) throw fail("input");
  if (std::sscanf(parts[1].c_str(), "classes=%lu", &k) != 1) throw fail("classes");
  g.input = {h, w, c};
  g.num_classes = k;
  for (std::size_t i = 2; i < parts.size(); ++i) {
    std::vector<std::string> f;
    std::string tok;
    std::istringstream is(parts[i]);
    while (std::getline(is, tok, ':')) f.push_back(tok);
    if (f.size() < 2) throw fail("layer '" + parts[i] + "'");
    LayerSpec l;
    l.name = f[0];
    if (f[1] == "conv_bn_relu" && f.size() == 4 && f[2][0] == 'k' && f[3][0] == 'c') {
      l.kind = LayerKind::conv_bn_relu;
      l.kernel_size = std::stoi(f[2].substr(1));
      l.out_channels = std::stoi(f[3].substr(1));
    } else if (f[1] == "maxpool" && f.size() == 2) {
      l.kind = LayerKind::maxpool;
    } else if (f[1] == "global_avgpool" && f.size() == 2) {
      l.kind = LayerKind::global_avgpool;
    } else if (f[1] == "dense_head" && f.size() == 3 && f[2][0] == 'c') {
      l.kind = LayerKind::dense_head;
      l.out_channels = std::stoi(f[2].substr(1));
    } else {
      throw fail("layer '" + parts[i] + "'");
    }
    g.layers.push_back(l);
  }
  validate_graph(g);
  if (g.serialize() != text) throw fail("round trip");
  return g;
}

namespace {

struct VariantDef {
  CbrVariant v;
  const char* name;
  int kernel;
  std::vector<int> channels;
  std::size_t pooled;  // number of leading convs followed by a maxpool
};

const std::vector<VariantDef>& variant_defs() {
  static const std::vector<VariantDef> defs = {
      {CbrVariant::LargeT, "LargeT", 7, {32, 64, 128, 256, 512}, 4},
      {CbrVariant::LargeW, "LargeW", 7, {64, 128, 256, 512}, 4},
      {CbrVariant::Small, "Small", 7, {32, 64, 128, 256}, 4},
      {CbrVariant::Tiny, "Tiny", 5, {64, 128, 256, 512}, 4},
      {CbrVariant::SmallDesk, "SmallDesk", 7, {8, 16, 32, 64}, 4},
      {CbrVariant::TinyDesk, "TinyDesk", 5, {16, 32, 64, 128}, 4},
  };
  return defs;
}

const VariantDef& def_of(CbrVariant v) {
  for (const auto& d : variant_defs())
    if (d.v == v) return d;
  throw InvalidArgument("unknown CBR variant");
}

}  // namespace

CbrVariant parse_cbr_variant(std::string_view name) {
  for (const auto& d : variant_defs()) {
    if (name == d.name || name == std::string("CBR-") + d.name) return d.v;
  }
  throw InvalidArgument("unknown CBR variant '" + std::string(name) + "'");
}

const char* cbr_variant_name(CbrVariant v) { return def_of(v).name; }

ModelGraph build_cbr(CbrVariant variant, InputShape input, std::size_t num_classes) {
  const VariantDef& def = def_of(variant);
  if (num_classes == 0) throw InvalidArgument("build_cbr: num_classes must be positive");
  ModelGraph g;
  g.input = input;
  g.num_classes = num_classes;
  g.variant_tag = def.name;
  for (std::size_t i = 0; i < def.channels.size(); ++i) {
    g.layers.push_back({LayerKind::conv_bn_relu, def.kernel, def.channels[i],
                        "conv" + std::to_string(i + 1)});
    if (i < def.pooled) g.layers.push_back({LayerKind::maxpool, 0, 0, "pool" + std::to_string(i + 1)});
  }
  g.layers.push_back({LayerKind::global_avgpool, 0, 0, "gap"});
  g.layers.push_back({LayerKind::dense_head, 0, static_cast<int>(num_classes), "head"});
  validate_graph(g);
  return g;
}

void validate_graph(const ModelGraph& g) {
  if (g.layers.size() < 2 || g.layers.back().kind != LayerKind::dense_head ||
      g.layers[g.layers.size() - 2].kind != LayerKind::global_avgpool)
    throw InvalidArgument("graph must end with global_avgpool followed by dense_head");
  if (g.input.height == 0 || g.input.width == 0 || g.input.channels == 0)
    throw InvalidArgument("graph input dims must be positive");
  std::set<std::string> names;
  int kernel = 0;
  std::size_t h = g.input.height, w = g.input.width;
  for (const auto& l : g.layers) {
    if (l.name.empty() || !names.insert(l.name).second)
      throw InvalidArgument("layer names must be unique and non-empty ('" + l.name + "')");
    switch (l.kind) {
      case LayerKind::conv_bn_relu:
        if (l.kernel_size <= 0 || l.kernel_size % 2 == 0)
          throw InvalidArgument("conv kernel size must be odd: " + l.name);
        if (kernel != 0 && kernel != l.kernel_size)
          throw InvalidArgument("conv kernel sizes must be equal across the graph");
        if (l.out_channels <= 0) throw InvalidArgument("conv channels must be positive: " + l.name);
        kernel = l.kernel_size;
        break;
      case LayerKind::maxpool:
        if (h < 3 || w < 3)
          throw InvalidArgument("input too small for pool chain: " + l.name + " sees " +
                                std::to_string(h) + "x" + std::to_string(w));
        h = pooled_extent(h);
        w = pooled_extent(w);
        break;
      case LayerKind::global_avgpool:
      case LayerKind::dense_head:
        break;
    }
  }
  if (g.layers.back().out_channels != static_cast<int>(g.num_classes))
    throw InvalidArgument("dense head width must equal num_classes");
}

std::vector<TensorDecl> parameter_layout(const ModelGraph& g) {
  std::vector<TensorDecl> out;
  std::size_t channels = g.input.channels;
  for (const auto& l : g.layers) {
    if (l.kind == LayerKind::conv_bn_relu) {
      const std::size_t k = static_cast<std::size_t>(l.kernel_size);
      const std::size_t c = static_cast<std::size_t>(l.out_channels);
      out.push_back({l.name + "/kernel", l.name, Role::kernel, {k, k, channels, c}});
      out.push_back({l.name + "/gamma", l.name, Role::gamma, {c}});
      out.push_back({l.name + "/beta", l.name, Role::beta, {c}});
      out.push_back({l.name + "/moving_mean", l.name, Role::moving_mean, {c}});
      out.push_back({l.name + "/moving_var", l.name, Role::moving_var, {c}});
      channels = c;
    } else if (l.kind == LayerKind::dense_head) {
      const std::size_t c = static_cast<std::size_t>(l.out_channels);
      out.push_back({l.name + "/weight", l.name, Role::dense_weight, {channels, c}});
      out.push_back({l.name + "/bias", l.name, Role::dense_bias, {c}});
    }
  }
  return out;
}

std::size_t param_count(const ModelGraph& g) {
  std::size_t n = 0;
  for (const auto& d : parameter_layout(g))
    if (is_trainable(d.role)) n += shape_size(d.shape);
  return n;
}

std::vector<LayerGeometry> layer_geometry(const ModelGraph& g) {
  std::vector<LayerGeometry> out;
  std::size_t h = g.input.height, w = g.input.width, c = g.input.channels;
  for (const auto& l : g.layers) {
    switch (l.kind) {
      case LayerKind::conv_bn_relu: c = static_cast<std::size_t>(l.out_channels); break;
      case LayerKind::maxpool: h = pooled_extent(h); w = pooled_extent(w); break;
      case LayerKind::global_avgpool: h = 1; w = 1; break;
      case LayerKind::dense_head: c = static_cast<std::size_t>(l.out_channels); break;
    }
    out.push_back({h, w, c});
  }
  return out;
}

ModelGraph slim(const ModelGraph& graph, std::string_view from_layer, double width_factor) {
  const std::size_t from = graph.require_index(from_layer);
  if (!(width_factor > 0.0 && width_factor <= 1.0))
    throw InvalidArgument("slim: width_factor must lie in (0, 1]");
  if (width_factor == 1.0) return graph;
  ModelGraph g = graph;
  for (std::size_t i = from; i < g.layers.size(); ++i) {
    auto& l = g.layers[i];
    if (l.kind != LayerKind::conv_bn_relu) continue;
    const int c = static_cast<int>(std::floor(l.out_channels * width_factor));
    if (c < 1) throw InvalidArgument("slim: factor yields 0 channels at " + l.name);
    l.out_channels = c;
  }
  std::ostringstream tag;
  tag << graph.variant_tag << "-slim(" << from_layer << "," << width_factor << ")";
  g.variant_tag = tag.str();
  validate_graph(g);
  return g;
}

}  // namespace trlab
