#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "trlab/container.hpp"
#include "trlab/zoo.hpp"

namespace trlab {

/// Ordered, named parameter map for one model. Entry order follows the graph's
/// layer order; moving statistics are stored alongside trainable tensors.
template <typename T>
class BasicWeightStore {
 public:
  struct Entry {
    std::string name;
    std::string layer;
    Role role;
    Tensor<T> value;
  };

  BasicWeightStore() = default;
  /// Zero-filled store laid out for `graph`.
  explicit BasicWeightStore(const ModelGraph& graph) : fingerprint_(graph.fingerprint()) {
    for (auto& d : parameter_layout(graph)) add(d.name, d.layer, d.role, Tensor<T>(d.shape));
  }

  void add(std::string name, std::string layer, Role role, Tensor<T> value) {
    if (index_.count(name)) throw InvalidArgument("duplicate weight '" + name + "'");
    index_.emplace(name, entries_.size());
    entries_.push_back({std::move(name), std::move(layer), role, std::move(value)});
  }

  std::size_t size() const noexcept { return entries_.size(); }
  std::vector<Entry>& entries() noexcept { return entries_; }
  const std::vector<Entry>& entries() const noexcept { return entries_; }
  Entry& entry(std::size_t i) { return entries_[i]; }
  const Entry& entry(std::size_t i) const { return entries_[i]; }

  const Entry* find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &entries_[it->second];
  }
  std::size_t index(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw InvalidArgument("no weight named '" + name + "'");
    return it->second;
  }
  Tensor<T>& at(const std::string& name) { return entries_[index(name)].value; }
  const Tensor<T>& at(const std::string& name) const { return entries_[index(name)].value; }

  const std::string& fingerprint() const noexcept { return fingerprint_; }
  void set_fingerprint(std::string fp) { fingerprint_ = std::move(fp); }

  template <typename U>
  BasicWeightStore<U> cast() const {
    BasicWeightStore<U> out;
    out.set_fingerprint(fingerprint_);
    for (const auto& e : entries_) out.add(e.name, e.layer, e.role, e.value.template cast<U>());
    return out;
  }

  bool bit_equal(const BasicWeightStore& other) const {
    if (entries_.size() != other.entries_.size()) return false;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      if (entries_[i].name != other.entries_[i].name ||
          !entries_[i].value.bit_equal(other.entries_[i].value))
        return false;
    }
    return true;
  }

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
  std::string fingerprint_;
};

using WeightStore = BasicWeightStore<float>;

/// Trainability mask: tensor name -> trainable. Must cover every tensor.
using FreezeMask = std::map<std::string, bool>;

FreezeMask all_trainable(const WeightStore& store);

/// Checks that `store` has exactly the graph's layout and fingerprint.
void check_store_matches(const WeightStore& store, const ModelGraph& graph);

/// Content digest over names and payload bytes; used as a checkpoint id.
std::string weights_digest(const WeightStore& store);

/// Checkpoint I/O: TNSR with metadata `graph_fingerprint`, `role/<name>`,
/// plus caller-provided keys (global step, optimizer, seed, ...).
Container to_container(const WeightStore& store, const Metadata& extra = {});
WeightStore from_container(const Container& c);
void save_checkpoint(const std::filesystem::path& path, const WeightStore& store,
                     const Metadata& extra = {});
WeightStore load_checkpoint(const std::filesystem::path& path, Metadata* metadata = nullptr);

/// As save_checkpoint, also recording the graph description (`graph`,
/// `variant_tag`) so the architecture can be rebuilt from the file alone.
void save_checkpoint(const std::filesystem::path& path, const WeightStore& store, const ModelGraph& graph,
                     const Metadata& extra = {});
/// Graph recorded in a checkpoint; throws if absent or inconsistent with its fingerprint.
ModelGraph graph_from_metadata(const Metadata& metadata);
/// Loads a checkpoint written with its graph; returns both.
std::pair<ModelGraph, WeightStore> load_model(const std::filesystem::path& path, Metadata* metadata = nullptr);

}  // namespace trlab
