#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "trlab/tensor.hpp"

namespace trlab {

/// On-disk layout ("TNSR"):
///   bytes 0-7    ASCII "TNSRBOX1"
///   bytes 8-15   u64 little-endian manifest length H
///   bytes 16..   UTF-8 JSON manifest {"entries": [...], "metadata": {...}}
///   remainder    payload; each entry has {name, dtype, shape, offset, byte_len}
///                with offset relative to the payload start.
/// All scalars are stored little-endian regardless of host byte order.
inline constexpr char kContainerMagic[9] = "TNSRBOX1";

using Metadata = std::map<std::string, std::string>;

struct Container {
  std::vector<std::pair<std::string, AnyTensor>> tensors;
  Metadata metadata;

  const AnyTensor* find(const std::string& name) const;
  /// Throws if absent or not f32.
  const TensorF& f32(const std::string& name) const;
  const std::string& meta(const std::string& key) const;
  std::string meta_or(const std::string& key, std::string fallback) const;
};

class ContainerError : public Error {
 public:
  enum class Kind { io, bad_magic, truncated, length_mismatch, duplicate_name, bad_manifest };
  ContainerError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

void save_container(const std::filesystem::path& path, const Container& container);
Container load_container(const std::filesystem::path& path);

}  // namespace trlab
