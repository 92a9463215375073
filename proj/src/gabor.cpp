#include <algorithm>
#include <cmath>
#include <numbers>

#include "trlab/init.hpp"

namespace trlab {

TensorD gabor_kernel(double frequency, double theta, double sigma, double nstds) {
  if (!(sigma > 0)) throw InvalidArgument("gabor sigma must be positive");
  const double ct = std::cos(theta), st = std::sin(theta);
  const auto x0 = static_cast<long>(std::ceil(std::max({std::abs(nstds * sigma * ct), std::abs(nstds * sigma * st), 1.0})));
  const auto y0 = static_cast<long>(std::ceil(std::max({std::abs(nstds * sigma * st), std::abs(nstds * sigma * ct), 1.0})));
  const std::size_t h = static_cast<std::size_t>(2 * y0 + 1), w = static_cast<std::size_t>(2 * x0 + 1);
  TensorD k({h, w});
  const double norm = 1.0 / (2 * std::numbers::pi * sigma * sigma);
  for (long y = -y0; y <= y0; ++y) {
    for (long x = -x0; x <= x0; ++x) {
      const double rx = x * ct + y * st;
      const double ry = -x * st + y * ct;
      const double g = norm * std::exp(-0.5 * (rx * rx + ry * ry) / (sigma * sigma)) *
                       std::cos(2 * std::numbers::pi * frequency * rx);
      k[static_cast<std::size_t>(y + y0) * w + static_cast<std::size_t>(x + x0)] = g;
    }
  }
  return k;
}

TensorD resize_bilinear(const TensorD& image, std::size_t out_h, std::size_t out_w) {
  if (image.rank() != 2) throw ShapeError("resize_bilinear expects a 2-d image");
  if (out_h == 0 || out_w == 0) throw InvalidArgument("resize target must be non-empty");
  const std::size_t H = image.dim(0), W = image.dim(1);
  TensorD out({out_h, out_w});
  auto coord = [](std::size_t dst, std::size_t in, std::size_t outn, std::size_t& i0, std::size_t& i1, double& t) {
    double src = (static_cast<double>(dst) + 0.5) * static_cast<double>(in) / static_cast<double>(outn) - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    i0 = static_cast<std::size_t>(std::floor(src));
    i1 = std::min(i0 + 1, in - 1);
    t = src - static_cast<double>(i0);
  };
  for (std::size_t y = 0; y < out_h; ++y) {
    std::size_t y0, y1;
    double ty;
    coord(y, H, out_h, y0, y1, ty);
    for (std::size_t x = 0; x < out_w; ++x) {
      std::size_t x0, x1;
      double tx;
      coord(x, W, out_w, x0, x1, tx);
      const double top = (1 - tx) * image[y0 * W + x0] + tx * image[y0 * W + x1];
      const double bot = (1 - tx) * image[y1 * W + x0] + tx * image[y1 * W + x1];
      out[y * out_w + x] = (1 - ty) * top + ty * bot;
    }
  }
  return out;
}

TensorD center_crop(const TensorD& image, std::size_t crop) {
  if (image.rank() != 2) throw ShapeError("center_crop expects a 2-d image");
  const std::size_t H = image.dim(0), W = image.dim(1);
  if (crop > H || crop > W)
    throw InvalidArgument("crop " + std::to_string(crop) + " larger than kernel " + shape_str(image.shape()));
  const std::size_t oy = (H - crop) / 2, ox = (W - crop) / 2;
  TensorD out({crop, crop});
  for (std::size_t y = 0; y < crop; ++y)
    for (std::size_t x = 0; x < crop; ++x) out[y * crop + x] = image[(y + oy) * W + x + ox];
  return out;
}

GaborStages gabor_filter(const GaborConfig& config, double sigma, double frequency, double theta) {
  GaborStages s;
  s.raw = gabor_kernel(frequency, theta, sigma, config.nstds);
  s.resized = s.raw.dim(0) > config.kernel_resize
                  ? resize_bilinear(s.raw, config.kernel_resize, config.kernel_resize)
                  : s.raw;
  s.cropped = center_crop(s.resized, config.kernel_crop);
  return s;
}

TensorD gabor_bank(const GaborConfig& config) {
  const std::size_t n = config.bank_size(), k = config.kernel_crop;
  if (n == 0) throw InvalidArgument("empty Gabor configuration");
  TensorD bank({n, k, k});
  std::size_t i = 0;
  for (double sigma : config.sigmas) {
    for (double f : config.freqs) {
      for (std::size_t a = 0; a < config.n_angles; ++a) {
        const double theta = static_cast<double>(a) / static_cast<double>(config.n_angles) * std::numbers::pi;
        const TensorD filt = gabor_filter(config, sigma, f, theta).cropped;
        std::copy(filt.vec().begin(), filt.vec().end(), bank.raw() + i * k * k);
        ++i;
      }
    }
  }
  return bank;
}

namespace {

template <typename T>
double std_of(std::span<const T> v) {
  double sum = 0;
  for (T x : v) sum += x;
  const double mu = sum / static_cast<double>(v.size());
  double ss = 0;
  for (T x : v) ss += (x - mu) * (x - mu);
  return std::sqrt(ss / static_cast<double>(v.size()));
}

}  // namespace

TensorD scale_to_match(const TensorD& bank, const TensorF& reference, double* scale_out) {
  if (bank.size() == 0 || reference.size() == 0) throw InvalidArgument("scale_to_match on an empty tensor");
  const double sb = std_of(bank.data());
  if (!(sb > 0)) throw InvalidArgument("scale_to_match: zero-variance bank");
  const double sr = std_of(reference.data());
  if (!(sr > 0)) throw InvalidArgument("scale_to_match: reference is constant");
  const double s = sr / sb;
  TensorD out = bank;
  for (auto& v : out.vec()) v *= s;
  if (scale_out) *scale_out = s;
  return out;
}

WeightStore apply_conv1_gabor(const WeightStore& weights, const ModelGraph& graph, const GaborConfig& config,
                              const TensorF& reference) {
  check_store_matches(weights, graph);
  const auto convs = graph.conv_layer_names();
  if (convs.empty()) throw InvalidArgument("graph has no conv layer");
  const std::string name = convs.front() + "/kernel";
  WeightStore out = weights;
  TensorF& kernel = out.at(name);
  const std::size_t K = kernel.dim(0), cin = kernel.dim(2), cout = kernel.dim(3);
  if (K != config.kernel_crop || kernel.dim(1) != config.kernel_crop || cout != config.bank_size())
    throw ShapeError("Gabor bank of " + std::to_string(config.bank_size()) + " filters of " +
                     std::to_string(config.kernel_crop) + "x" + std::to_string(config.kernel_crop) +
                     " does not fit " + name + " " + shape_str(kernel.shape()));
  const TensorD bank = scale_to_match(gabor_bank(config), reference);
  for (std::size_t y = 0; y < K; ++y)
    for (std::size_t x = 0; x < K; ++x)
      for (std::size_t ci = 0; ci < cin; ++ci)
        for (std::size_t co = 0; co < cout; ++co)
          kernel.at(y, x, ci, co) = static_cast<float>(bank[(co * K + y) * K + x]);
  return out;
}

}  // namespace trlab
