#pragma once

#include <filesystem>
#include <string>

#include <unistd.h>

#include "trlab/rng.hpp"
#include "trlab/tensor.hpp"
#include "trlab/zoo.hpp"

namespace trlab::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("trlab_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

template <typename T>
Tensor<T> random_tensor(const Shape& shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  RngStream s(seed, "test/random_tensor");
  Tensor<T> t(shape);
  for (auto& v : t.vec()) v = static_cast<T>(lo + (hi - lo) * s.uniform());
  return t;
}

/// TinyDesk on a small input; every pool still sees >= 3 pixels.
inline ModelGraph small_tinydesk(std::size_t size = 20, std::size_t classes = 3) {
  return build_cbr(CbrVariant::TinyDesk, {size, size, 3}, classes);
}

}  // namespace trlab::testing
