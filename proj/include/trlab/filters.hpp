#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "trlab/weights.hpp"

namespace trlab {

/// 8-bit grayscale raster ("P5" binary PGM, one-line header "P5 w h 255").
struct GrayImage {
  std::size_t width = 0, height = 0;
  std::vector<std::uint8_t> pixels;  // row-major
};

void write_pgm(const std::filesystem::path& path, const GrayImage& image);
GrayImage read_pgm(const std::filesystem::path& path);

/// Filter k of a K x K x Cin x Cout kernel averaged over input channels,
/// min-max scaled to 0..255 (a constant filter maps to 128).
GrayImage filter_image(const TensorF& kernel, std::size_t k);

/// Filters laid out row-major by channel index on a ceil(sqrt(n))-column
/// grid with one-pixel black separators.
GrayImage filter_montage(const TensorF& kernel);

struct FilterExport {
  std::vector<std::filesystem::path> files;
  std::filesystem::path montage;
};

/// Writes <out>/<layer>_<k>.pgm for every output channel plus <out>/<layer>_montage.pgm.
FilterExport export_filters(const WeightStore& store, const std::string& layer, const std::filesystem::path& out);

}  // namespace trlab
