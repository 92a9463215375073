#include "trlab/container.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

namespace trlab {

using nlohmann::json;

const AnyTensor* Container::find(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return &t;
  return nullptr;
}

const TensorF& Container::f32(const std::string& name) const {
  const AnyTensor* t = find(name);
  if (!t) throw Error("container has no tensor named '" + name + "'");
  if (!std::holds_alternative<TensorF>(*t)) throw Error("tensor '" + name + "' is not f32");
  return std::get<TensorF>(*t);
}

const std::string& Container::meta(const std::string& key) const {
  auto it = metadata.find(key);
  if (it == metadata.end()) throw Error("container metadata lacks key '" + key + "'");
  return it->second;
}

std::string Container::meta_or(const std::string& key, std::string fallback) const {
  auto it = metadata.find(key);
  return it == metadata.end() ? std::move(fallback) : it->second;
}

namespace {

template <typename U>
U to_le(U v) {
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(U)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<U>(bytes);
  }
  return v;
}

template <typename T>
void append_le(std::string& out, const Tensor<T>& t) {
  using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  const std::size_t start = out.size();
  out.resize(start + t.size() * sizeof(T));
  char* dst = out.data() + start;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const Bits b = to_le(std::bit_cast<Bits>(t[i]));
    std::memcpy(dst + i * sizeof(T), &b, sizeof(T));
  }
}

template <typename T>
Tensor<T> read_le(const char* src, const Shape& shape) {
  using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  Tensor<T> t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) {
    Bits b;
    std::memcpy(&b, src + i * sizeof(T), sizeof(T));
    t[i] = std::bit_cast<T>(to_le(b));
  }
  return t;
}

}  // namespace

void save_container(const std::filesystem::path& path, const Container& container) {
  std::set<std::string> seen;
  json entries = json::array();
  std::string payload;
  for (const auto& [name, tensor] : container.tensors) {
    if (name.empty()) throw ContainerError(ContainerError::Kind::bad_manifest, "empty tensor name");
    if (!seen.insert(name).second)
      throw ContainerError(ContainerError::Kind::duplicate_name, "duplicate tensor name '" + name + "'");
    const std::size_t offset = payload.size();
    std::visit([&](const auto& t) { append_le(payload, t); }, tensor);
    entries.push_back({{"name", name},
                       {"dtype", dtype_name(dtype_of(tensor))},
                       {"shape", shape_of(tensor)},
                       {"offset", offset},
                       {"byte_len", payload.size() - offset}});
  }
  json manifest = {{"entries", entries}, {"metadata", container.metadata}};
  const std::string header = manifest.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ContainerError(ContainerError::Kind::io, "cannot open '" + path.string() + "' for writing");
  out.write(kContainerMagic, 8);
  const std::uint64_t hlen = to_le<std::uint64_t>(header.size());
  out.write(reinterpret_cast<const char*>(&hlen), 8);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw ContainerError(ContainerError::Kind::io, "write failed for '" + path.string() + "'");
}

Container load_container(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ContainerError(ContainerError::Kind::io, "cannot open '" + path.string() + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  if (bytes.size() < 8 || std::memcmp(bytes.data(), kContainerMagic, 8) != 0)
    throw ContainerError(ContainerError::Kind::bad_magic, "bad magic in '" + path.string() + "'");
  if (bytes.size() < 16)
    throw ContainerError(ContainerError::Kind::truncated, "truncated header in '" + path.string() + "'");
  std::uint64_t hlen;
  std::memcpy(&hlen, bytes.data() + 8, 8);
  hlen = to_le(hlen);
  if (hlen > bytes.size() - 16)
    throw ContainerError(ContainerError::Kind::truncated, "truncated manifest in '" + path.string() + "'");

  json manifest;
  try {
    manifest = json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(hlen));
  } catch (const json::exception& e) {
    throw ContainerError(ContainerError::Kind::bad_manifest, std::string("unparsable manifest: ") + e.what());
  }

  const char* payload = bytes.data() + 16 + hlen;
  const std::size_t payload_len = bytes.size() - 16 - hlen;

  Container c;
  std::vector<std::pair<std::size_t, std::size_t>> spans;
  try {
    for (const auto& [k, v] : manifest.at("metadata").items()) c.metadata[k] = v.get<std::string>();
    std::set<std::string> seen;
    for (const auto& e : manifest.at("entries")) {
      const auto name = e.at("name").get<std::string>();
      const auto dt = e.at("dtype").get<std::string>();
      const auto shape = e.at("shape").get<Shape>();
      const auto offset = e.at("offset").get<std::size_t>();
      const auto byte_len = e.at("byte_len").get<std::size_t>();
      if (!seen.insert(name).second)
        throw ContainerError(ContainerError::Kind::duplicate_name, "duplicate tensor name '" + name + "'");
      DType dtype;
      if (dt == "f32") dtype = DType::f32;
      else if (dt == "f64") dtype = DType::f64;
      else throw ContainerError(ContainerError::Kind::bad_manifest, "unknown dtype '" + dt + "'");
      if (byte_len != shape_size(shape) * dtype_size(dtype))
        throw ContainerError(ContainerError::Kind::length_mismatch,
                             "entry '" + name + "' byte_len " + std::to_string(byte_len) +
                                 " does not match shape " + shape_str(shape));
      if (offset > payload_len || byte_len > payload_len - offset)
        throw ContainerError(ContainerError::Kind::truncated,
                             "truncated payload: entry '" + name + "' extends past end of file");
      spans.emplace_back(offset, byte_len);
      if (dtype == DType::f32) c.tensors.emplace_back(name, read_le<float>(payload + offset, shape));
      else c.tensors.emplace_back(name, read_le<double>(payload + offset, shape));
    }
  } catch (const json::exception& e) {
    throw ContainerError(ContainerError::Kind::bad_manifest, std::string("malformed manifest: ") + e.what());
  }

  std::sort(spans.begin(), spans.end());
  for (std::size_t i = 1; i < spans.size(); ++i) {
    if (spans[i - 1].first + spans[i - 1].second > spans[i].first && spans[i].second > 0)
      throw ContainerError(ContainerError::Kind::bad_manifest, "overlapping payload entries");
  }
  return c;
}

}  // namespace trlab
