#include "trlab/data.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <unordered_map>
#include <unordered_set>

#include "trlab/rng.hpp"

namespace trlab {

namespace {

constexpr std::size_t kChannels = 3;

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

Metadata base_metadata(const SynthTaskConfig& cfg) {
  return {{"kind", synth_kind_name(cfg.kind)},
          {"seed", std::to_string(cfg.seed)},
          {"generator_version", kGeneratorVersion},
          {"norm_mean", num(kNormMean)},
          {"norm_std", num(kNormStd)},
          {"n", std::to_string(cfg.n)},
          {"image_size", std::to_string(cfg.image_size)},
          {"num_classes", std::to_string(cfg.num_classes)},
          {"group_size", std::to_string(cfg.group_size)},
          {"noise_level", num(cfg.noise_level)}};
}

void check_common(const SynthTaskConfig& cfg) {
  if (cfg.image_size < 8) throw InvalidArgument("image_size must be at least 8");
  if (cfg.num_classes < 1) throw InvalidArgument("num_classes must be at least 1");
  if (cfg.group_size < 1) throw InvalidArgument("group_size must be at least 1");
  if (!(cfg.noise_level >= 0)) throw InvalidArgument("noise_level must be non-negative");
}

float clamp01(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

struct Wave {
  double kx, ky, phase, amp;
};

// Low-frequency texture: a handful of oriented sinusoids.
std::vector<Wave> random_waves(RngStream& s, std::size_t count, double fmin, double fmax, double amp) {
  std::vector<Wave> w(count);
  for (auto& v : w) {
    const double theta = s.uniform() * std::numbers::pi;
    const double f = fmin + (fmax - fmin) * s.uniform();
    v = {2 * std::numbers::pi * f * std::cos(theta), 2 * std::numbers::pi * f * std::sin(theta),
         2 * std::numbers::pi * s.uniform(), amp * (0.5 + s.uniform())};
  }
  return w;
}

double eval_waves(const std::vector<Wave>& w, double x, double y) {
  double t = 0;
  for (const auto& v : w) t += v.amp * std::sin(v.kx * x + v.ky * y + v.phase);
  return t;
}

void take_example(DatasetBundle& b, std::size_t i, const std::vector<float>& pixels) {
  std::copy(pixels.begin(), pixels.end(), b.images.raw() + i * pixels.size());
}

}  // namespace

SynthKind parse_synth_kind(const std::string& name) {
  if (name == "local-dots" || name == "local_dots") return SynthKind::local_dots;
  if (name == "global-shape" || name == "global_shape") return SynthKind::global_shape;
  throw InvalidArgument("unknown dataset kind '" + name + "' (expected local-dots or global-shape)");
}

const char* synth_kind_name(SynthKind kind) {
  return kind == SynthKind::local_dots ? "local-dots" : "global-shape";
}

DatasetBundle DatasetBundle::select(std::span<const std::size_t> indices) const {
  DatasetBundle out;
  const std::size_t H = images.dim(1), W = images.dim(2), C = images.dim(3);
  const std::size_t per = H * W * C, K = labels.dim(1);
  out.images = TensorF({indices.size(), H, W, C});
  out.labels = TensorF({indices.size(), K});
  out.group_ids.reserve(indices.size());
  out.metadata = metadata;
  for (std::size_t j = 0; j < indices.size(); ++j) {
    const std::size_t i = indices[j];
    if (i >= size()) throw InvalidArgument("example index " + std::to_string(i) + " out of range");
    std::copy_n(images.raw() + i * per, per, out.images.raw() + j * per);
    std::copy_n(labels.raw() + i * K, K, out.labels.raw() + j * K);
    out.group_ids.push_back(group_ids[i]);
  }
  return out;
}

void DatasetBundle::validate() const {
  if (images.rank() != 4) throw ShapeError("images must be N x H x W x C, got " + shape_str(images.shape()));
  if (labels.rank() != 2) throw ShapeError("labels must be N x classes, got " + shape_str(labels.shape()));
  const std::size_t n = images.dim(0);
  if (labels.dim(0) != n || group_ids.size() != n)
    throw ShapeError("images, labels and group ids disagree on example count");
  for (float v : labels.data())
    if (v != 0.0f && v != 1.0f) throw InvalidArgument("labels must be binary");
  if (!images.all_finite()) throw InvalidArgument("images contain non-finite values");
}

DatasetBundle synth_local_dots(const SynthTaskConfig& cfg, std::vector<std::size_t>* dot_counts) {
  check_common(cfg);
  const std::size_t S = cfg.image_size, K = cfg.num_classes;
  const double r = cfg.dot_radius;
  if (!(r > 0)) throw InvalidArgument("dot_radius must be positive");
  const double margin = std::ceil(r) + 1;
  const double span = static_cast<double>(S) - 1 - 2 * margin;
  const std::size_t max_spots = K * cfg.dots_per_class + 3;
  const double spacing = 2 * r + 2;
  if (span <= 0 || span * span < 4.0 * static_cast<double>(max_spots) * spacing * spacing)
    throw InvalidArgument("infeasible geometry: " + std::to_string(max_spots) + " dots of radius " + num(r) +
                          " do not fit in a " + std::to_string(S) + "-pixel image");

  DatasetBundle b;
  b.images = TensorF({cfg.n, S, S, kChannels});
  b.labels = TensorF({cfg.n, K});
  b.group_ids.resize(cfg.n);
  b.metadata = base_metadata(cfg);
  b.metadata["dot_radius"] = num(r);
  b.metadata["dots_per_class"] = std::to_string(cfg.dots_per_class);
  if (dot_counts) dot_counts->assign(cfg.n, 0);

  struct Style {
    double base[3];
    std::vector<Wave> waves;
  };
  std::unordered_map<std::size_t, Style> styles;
  auto style_of = [&](std::size_t g) -> const Style& {
    auto it = styles.find(g);
    if (it != styles.end()) return it->second;
    RngStream s(cfg.seed, "local-dots/group/" + std::to_string(g));
    Style st;
    st.base[0] = 0.78 + 0.06 * (2 * s.uniform() - 1);
    st.base[1] = 0.45 + 0.06 * (2 * s.uniform() - 1);
    st.base[2] = 0.28 + 0.05 * (2 * s.uniform() - 1);
    st.waves = random_waves(s, 3, 0.02, 0.08, 0.03);
    return styles.emplace(g, std::move(st)).first->second;
  };

  std::vector<float> px(S * S * kChannels);
  for (std::size_t i = 0; i < cfg.n; ++i) {
    const std::size_t g = i / cfg.group_size;
    const Style& st = style_of(g);
    RngStream s(cfg.seed, "local-dots/example/" + std::to_string(i));
    const std::size_t grade = s.below(K + 1);
    const std::size_t ndots = grade * cfg.dots_per_class;
    const std::size_t nspots = s.below(4);
    const auto fine = random_waves(s, 2, 0.15, 0.3, 0.015);
    const double shift = 0.03 * (2 * s.uniform() - 1);

    std::vector<std::pair<double, double>> centers;
    auto place = [&] {
      for (int attempt = 0; attempt < 1000; ++attempt) {
        const double cx = margin + span * s.uniform(), cy = margin + span * s.uniform();
        bool ok = true;
        for (auto [x, y] : centers)
          if ((x - cx) * (x - cx) + (y - cy) * (y - cy) < spacing * spacing) ok = false;
        if (ok) {
          centers.emplace_back(cx, cy);
          return;
        }
      }
      throw InvalidArgument("infeasible geometry: could not place dots without overlap");
    };
    for (std::size_t k = 0; k < ndots + nspots; ++k) place();

    double dot_col[3] = {0.50 + 0.04 * s.uniform(), 0.10 + 0.03 * s.uniform(), 0.08 + 0.03 * s.uniform()};
    const double spot_col[3] = {0.95, 0.85, 0.45};

    for (std::size_t y = 0; y < S; ++y) {
      for (std::size_t x = 0; x < S; ++x) {
        const double t = eval_waves(st.waves, x, y) + eval_waves(fine, x, y) + shift;
        double v[3];
        for (int c = 0; c < 3; ++c) v[c] = st.base[c] * (1 + t);
        for (std::size_t k = 0; k < centers.size(); ++k) {
          const double dx = x - centers[k].first, dy = y - centers[k].second;
          const double a = std::clamp(r + 0.5 - std::sqrt(dx * dx + dy * dy), 0.0, 1.0);
          if (a <= 0) continue;
          const double* col = k < ndots ? dot_col : spot_col;
          for (int c = 0; c < 3; ++c) v[c] = (1 - a) * v[c] + a * col[c];
        }
        for (int c = 0; c < 3; ++c) px[(y * S + x) * kChannels + c] = clamp01(v[c] + cfg.noise_level * s.normal());
      }
    }
    take_example(b, i, px);
    for (std::size_t c = 0; c < K; ++c) b.labels[i * K + c] = grade > c ? 1.0f : 0.0f;
    b.group_ids[i] = g;
    if (dot_counts) (*dot_counts)[i] = ndots;
  }
  return b;
}

namespace {

constexpr std::size_t kShapeCount = 8;

bool inside_shape(std::size_t k, double u, double v) {
  const double ax = std::abs(u), ay = std::abs(v);
  const double rr = std::sqrt(u * u + v * v);
  const double m = std::max(ax, ay);
  switch (k) {
    case 0: return rr <= 1.0;                                                    // disc
    case 1: return m <= 0.8;                                                     // square
    case 2: return v <= 0.5 && v >= -1.0 + 1.732 * ax;                           // triangle
    case 3: return (ax <= 0.3 && ay <= 0.95) || (ay <= 0.3 && ax <= 0.95);       // cross
    case 4: return rr <= 1.0 && rr >= 0.6;                                       // ring
    case 5: return rr <= 1.0 && v >= 0.0;                                        // half disc
    case 6: return rr <= 0.5 + 0.45 * std::cos(5 * std::atan2(v, u));            // star
    default: return m <= 0.85 && m >= 0.55;                                      // frame
  }
}

}  // namespace

DatasetBundle synth_global_shape(const SynthTaskConfig& cfg) {
  check_common(cfg);
  const std::size_t S = cfg.image_size, K = cfg.num_classes;
  if (K > kShapeCount)
    throw InvalidArgument("global-shape supports at most " + std::to_string(kShapeCount) + " classes");
  if (S < 16) throw InvalidArgument("infeasible geometry: global-shape needs image_size >= 16");

  DatasetBundle b;
  b.images = TensorF({cfg.n, S, S, kChannels});
  b.labels = TensorF({cfg.n, K});
  b.group_ids.resize(cfg.n);
  b.metadata = base_metadata(cfg);

  std::vector<float> px(S * S * kChannels);
  const double Sd = static_cast<double>(S);
  for (std::size_t i = 0; i < cfg.n; ++i) {
    RngStream s(cfg.seed, "global-shape/example/" + std::to_string(i));
    const std::size_t k = s.below(K);
    double bg[3], fg[3];
    const double lum = 0.3 + 0.4 * s.uniform();
    for (double& c : bg) c = lum + 0.08 * (2 * s.uniform() - 1);
    const double sign = lum < 0.5 ? 1.0 : -1.0;
    for (int c = 0; c < 3; ++c) fg[c] = bg[c] + sign * (0.25 + 0.2 * s.uniform());
    const auto waves = random_waves(s, 3, 0.01, 0.05, 0.04);
    const double R = (0.25 + 0.13 * s.uniform()) * Sd;
    const double cx = 0.5 * (Sd - 1) + 0.08 * Sd * (2 * s.uniform() - 1);
    const double cy = 0.5 * (Sd - 1) + 0.08 * Sd * (2 * s.uniform() - 1);
    const double phi = (2 * s.uniform() - 1) * std::numbers::pi / 12;
    const double cp = std::cos(phi), sp = std::sin(phi);

    for (std::size_t y = 0; y < S; ++y) {
      for (std::size_t x = 0; x < S; ++x) {
        int hits = 0;
        for (int sy = 0; sy < 2; ++sy) {
          for (int sx = 0; sx < 2; ++sx) {
            const double dx = (x + 0.25 + 0.5 * sx - 0.5 - cx) / R, dy = (y + 0.25 + 0.5 * sy - 0.5 - cy) / R;
            const double u = cp * dx + sp * dy, v = -sp * dx + cp * dy;
            hits += inside_shape(k, u, v);
          }
        }
        const double a = hits / 4.0;
        const double t = eval_waves(waves, x, y);
        for (int c = 0; c < 3; ++c) {
          const double val = (1 - a) * bg[c] + a * fg[c] + t;
          px[(y * S + x) * kChannels + c] = clamp01(val + cfg.noise_level * s.normal());
        }
      }
    }
    take_example(b, i, px);
    for (std::size_t c = 0; c < K; ++c) b.labels[i * K + c] = c == k ? 1.0f : 0.0f;
    b.group_ids[i] = i / cfg.group_size;
  }
  return b;
}

DatasetBundle synth_dataset(const SynthTaskConfig& config) {
  return config.kind == SynthKind::local_dots ? synth_local_dots(config) : synth_global_shape(config);
}

namespace {

// Distinct group ids in first-appearance order, with their example indices.
std::vector<std::pair<std::uint64_t, std::vector<std::size_t>>> groups_of(const DatasetBundle& b) {
  std::vector<std::pair<std::uint64_t, std::vector<std::size_t>>> out;
  std::unordered_map<std::uint64_t, std::size_t> pos;
  for (std::size_t i = 0; i < b.size(); ++i) {
    auto [it, fresh] = pos.emplace(b.group_ids[i], out.size());
    if (fresh) out.push_back({b.group_ids[i], {}});
    out[it->second].second.push_back(i);
  }
  return out;
}

}  // namespace

Split split_by_group(const DatasetBundle& bundle, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0 && test_fraction < 1)) throw InvalidArgument("test_fraction must lie in (0, 1)");
  const auto groups = groups_of(bundle);
  if (groups.size() < 2) throw InvalidArgument("split_by_group needs at least two groups");
  RngStream s(seed, "split_by_group");
  const auto perm = rng_permutation(s, groups.size());
  const double target = std::round(test_fraction * static_cast<double>(bundle.size()));

  std::vector<bool> in_test(groups.size(), false);
  std::size_t test_n = 0, test_groups = 0;
  for (std::size_t k = 0; k < perm.size() && static_cast<double>(test_n) < target; ++k) {
    if (test_groups + 1 == groups.size()) break;
    in_test[perm[k]] = true;
    test_n += groups[perm[k]].second.size();
    ++test_groups;
  }
  if (test_groups == 0) in_test[perm[0]] = true;
  std::vector<std::size_t> tr, te;
  std::unordered_set<std::uint64_t> test_ids;
  for (std::size_t g = 0; g < groups.size(); ++g)
    if (in_test[g]) test_ids.insert(groups[g].first);
  for (std::size_t i = 0; i < bundle.size(); ++i) (test_ids.count(bundle.group_ids[i]) ? te : tr).push_back(i);
  Split out{bundle.select(tr), bundle.select(te)};
  out.train.metadata["split"] = "train";
  out.test.metadata["split"] = "test";
  out.train.metadata["split_seed"] = out.test.metadata["split_seed"] = std::to_string(seed);
  return out;
}

DatasetBundle subset(const DatasetBundle& bundle, std::size_t n, std::uint64_t seed) {
  if (n > bundle.size())
    throw InvalidArgument("subset size " + std::to_string(n) + " exceeds dataset size " +
                          std::to_string(bundle.size()));
  if (n == bundle.size()) return bundle;
  const auto groups = groups_of(bundle);
  RngStream s(seed, "subset");
  const auto perm = rng_permutation(s, groups.size());
  std::vector<bool> keep(groups.size(), false);
  std::size_t count = 0;
  auto dist = [n](std::size_t c) { return c > n ? c - n : n - c; };
  for (std::size_t k : perm) {
    const std::size_t next = count + groups[k].second.size();
    if (dist(next) < dist(count)) {
      keep[k] = true;
      count = next;
    }
  }
  std::vector<std::size_t> idx;
  for (std::size_t g = 0; g < groups.size(); ++g)
    if (keep[g]) idx.insert(idx.end(), groups[g].second.begin(), groups[g].second.end());
  std::sort(idx.begin(), idx.end());
  DatasetBundle out = bundle.select(idx);
  out.metadata["subset_n"] = std::to_string(n);
  out.metadata["subset_seed"] = std::to_string(seed);
  return out;
}

void save_dataset(const std::filesystem::path& path, const DatasetBundle& bundle) {
  bundle.validate();
  Container c;
  c.tensors.emplace_back("images", bundle.images);
  c.tensors.emplace_back("labels", bundle.labels);
  std::vector<double> ids(bundle.group_ids.begin(), bundle.group_ids.end());
  const std::size_t n_ids = ids.size();
  c.tensors.emplace_back("group_ids", TensorD({n_ids}, std::move(ids)));
  c.metadata = bundle.metadata;
  save_container(path, c);
}

DatasetBundle load_dataset(const std::filesystem::path& path) {
  Container c = load_container(path);
  const std::string version = c.meta_or("generator_version", "");
  if (version != kGeneratorVersion)
    throw InvalidArgument(path.string() + ": generator_version '" + version + "' differs from current '" +
                          kGeneratorVersion + "'; regenerate the dataset");
  DatasetBundle b;
  b.images = c.f32("images");
  b.labels = c.f32("labels");
  const AnyTensor* g = c.find("group_ids");
  if (!g || !std::holds_alternative<TensorD>(*g)) throw InvalidArgument(path.string() + ": missing group_ids");
  for (double v : std::get<TensorD>(*g).data()) b.group_ids.push_back(static_cast<std::uint64_t>(v));
  b.metadata = c.metadata;
  b.validate();
  return b;
}

}  // namespace trlab
