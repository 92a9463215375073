#include "trlab/weights.hpp"

#include "trlab/rng.hpp"

namespace trlab {

FreezeMask all_trainable(const WeightStore& store) {
  FreezeMask m;
  for (const auto& e : store.entries()) m[e.name] = true;
  return m;
}

void check_store_matches(const WeightStore& store, const ModelGraph& graph) {
  if (store.fingerprint() != graph.fingerprint())
    throw InvalidArgument("weight store fingerprint " + store.fingerprint() +
                          " does not match graph " + graph.fingerprint() + " (" + graph.variant_tag + ")");
  const auto layout = parameter_layout(graph);
  if (layout.size() != store.size())
    throw InvalidArgument("weight store does not cover the graph's tensors");
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const auto& e = store.entry(i);
    if (e.name != layout[i].name || e.value.shape() != layout[i].shape)
      throw ShapeError("weight '" + e.name + "' " + shape_str(e.value.shape()) + " does not match layout '" +
                       layout[i].name + "' " + shape_str(layout[i].shape));
  }
}

std::string weights_digest(const WeightStore& store) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& e : store.entries()) {
    h = fnv1a64(e.name, h);
    h = fnv1a64(std::string_view(reinterpret_cast<const char*>(e.value.raw()), e.value.size() * sizeof(float)), h);
  }
  return hex64(h);
}

Container to_container(const WeightStore& store, const Metadata& extra) {
  Container c;
  c.metadata = extra;
  c.metadata["graph_fingerprint"] = store.fingerprint();
  for (const auto& e : store.entries()) {
    c.tensors.emplace_back(e.name, e.value);
    c.metadata["role/" + e.name] = role_name(e.role);
  }
  return c;
}

WeightStore from_container(const Container& c) {
  WeightStore store;
  store.set_fingerprint(c.meta("graph_fingerprint"));
  for (const auto& [name, t] : c.tensors) {
    if (!std::holds_alternative<TensorF>(t)) throw Error("checkpoint tensor '" + name + "' is not f32");
    const auto slash = name.find('/');
    store.add(name, name.substr(0, slash), parse_role(c.meta("role/" + name)), std::get<TensorF>(t));
  }
  return store;
}

void save_checkpoint(const std::filesystem::path& path, const WeightStore& store, const Metadata& extra) {
  save_container(path, to_container(store, extra));
}

WeightStore load_checkpoint(const std::filesystem::path& path, Metadata* metadata) {
  Container c = load_container(path);
  if (metadata) *metadata = c.metadata;
  return from_container(c);
}

void save_checkpoint(const std::filesystem::path& path, const WeightStore& store, const ModelGraph& graph,
                     const Metadata& extra) {
  check_store_matches(store, graph);
  Metadata m = extra;
  m["graph"] = graph.serialize();
  m["variant_tag"] = graph.variant_tag;
  save_checkpoint(path, store, m);
}

ModelGraph graph_from_metadata(const Metadata& metadata) {
  auto it = metadata.find("graph");
  if (it == metadata.end()) throw InvalidArgument("checkpoint does not record its graph");
  auto tag = metadata.find("variant_tag");
  ModelGraph g = deserialize_graph(it->second, tag == metadata.end() ? "" : tag->second);
  auto fp = metadata.find("graph_fingerprint");
  if (fp != metadata.end() && fp->second != g.fingerprint())
    throw InvalidArgument("checkpoint graph description disagrees with its fingerprint");
  return g;
}

std::pair<ModelGraph, WeightStore> load_model(const std::filesystem::path& path, Metadata* metadata) {
  Metadata m;
  WeightStore w = load_checkpoint(path, &m);
  ModelGraph g = graph_from_metadata(m);
  check_store_matches(w, g);
  if (metadata) *metadata = m;
  return {std::move(g), std::move(w)};
}

}  // namespace trlab
