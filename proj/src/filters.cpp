#include "trlab/filters.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace trlab {

void write_pgm(const std::filesystem::path& path, const GrayImage& image) {
  if (image.pixels.size() != image.width * image.height) throw ShapeError("image pixel count mismatch");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write " + path.string());
  f << "P5 " << image.width << " " << image.height << " 255\n";
  f.write(reinterpret_cast<const char*>(image.pixels.data()), static_cast<std::streamsize>(image.pixels.size()));
  if (!f) throw Error("failed writing " + path.string());
}

GrayImage read_pgm(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot read " + path.string());
  std::string magic;
  GrayImage img;
  int maxval = 0;
  f >> magic >> img.width >> img.height >> maxval;
  if (magic != "P5" || maxval != 255 || !f) throw Error(path.string() + ": not an 8-bit P5 image");
  f.get();
  img.pixels.resize(img.width * img.height);
  f.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (static_cast<std::size_t>(f.gcount()) != img.pixels.size()) throw Error(path.string() + ": truncated image");
  return img;
}

GrayImage filter_image(const TensorF& kernel, std::size_t k) {
  if (kernel.rank() != 4) throw ShapeError("filter export expects a K x K x Cin x Cout kernel");
  const std::size_t H = kernel.dim(0), W = kernel.dim(1), C = kernel.dim(2), N = kernel.dim(3);
  if (k >= N) throw InvalidArgument("filter index out of range");
  std::vector<double> v(H * W, 0.0);
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) {
      double s = 0;
      for (std::size_t c = 0; c < C; ++c) s += kernel.at(y, x, c, k);
      v[y * W + x] = s / static_cast<double>(C);
    }
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  GrayImage img{W, H, std::vector<std::uint8_t>(H * W, 128)};
  if (*hi > *lo) {
    for (std::size_t i = 0; i < v.size(); ++i)
      img.pixels[i] = static_cast<std::uint8_t>(std::lround(255.0 * (v[i] - *lo) / (*hi - *lo)));
  }
  return img;
}

GrayImage filter_montage(const TensorF& kernel) {
  if (kernel.rank() != 4) throw ShapeError("filter export expects a K x K x Cin x Cout kernel");
  const std::size_t H = kernel.dim(0), W = kernel.dim(1), N = kernel.dim(3);
  const auto cols = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(N))));
  const std::size_t rows = (N + cols - 1) / cols;
  GrayImage m;
  m.width = cols * (W + 1) + 1;
  m.height = rows * (H + 1) + 1;
  m.pixels.assign(m.width * m.height, 0);
  for (std::size_t k = 0; k < N; ++k) {
    const GrayImage f = filter_image(kernel, k);
    const std::size_t oy = (k / cols) * (H + 1) + 1, ox = (k % cols) * (W + 1) + 1;
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x) m.pixels[(oy + y) * m.width + ox + x] = f.pixels[y * W + x];
  }
  return m;
}

FilterExport export_filters(const WeightStore& store, const std::string& layer, const std::filesystem::path& out) {
  const auto* e = store.find(layer + "/kernel");
  if (!e || e->role != Role::kernel) throw InvalidArgument("layer '" + layer + "' is not a conv layer");
  std::filesystem::create_directories(out);
  FilterExport ex;
  const std::size_t N = e->value.dim(3);
  for (std::size_t k = 0; k < N; ++k) {
    const auto p = out / (layer + "_" + std::to_string(k) + ".pgm");
    write_pgm(p, filter_image(e->value, k));
    ex.files.push_back(p);
  }
  ex.montage = out / (layer + "_montage.pgm");
  write_pgm(ex.montage, filter_montage(e->value));
  return ex;
}

}  // namespace trlab
