#include "trlab/cca.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include "trlab/nn/network.hpp"
#include "trlab/nn/train.hpp"

namespace trlab {

namespace {

using Mat = Eigen::MatrixXd;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Mat centered(const TensorD& t) {
  if (t.rank() != 2) throw ShapeError("activation matrix must be 2-d, got " + shape_str(t.shape()));
  if (!t.all_finite()) throw InvalidArgument("activation matrix contains non-finite values");
  Mat m = Eigen::Map<const RowMat>(t.raw(), static_cast<Eigen::Index>(t.dim(0)), static_cast<Eigen::Index>(t.dim(1)));
  m.colwise() -= m.rowwise().mean();
  return m;
}

Mat inv_sqrt(const Mat& sigma, double epsilon, const char* which) {
  Eigen::SelfAdjointEigenSolver<Mat> es(sigma);
  if (es.info() != Eigen::Success) throw ConditioningError(std::string("eigendecomposition failed for ") + which);
  const Eigen::VectorXd lam = es.eigenvalues();
  const double lmax = lam.maxCoeff(), lmin = lam.minCoeff();
  if (!(lmin > 0) || (epsilon == 0 && lmin <= 1e-10 * lmax))
    throw ConditioningError(std::string("auto-covariance of ") + which +
                            " is singular; increase epsilon or reduce dimensionality");
  return es.eigenvectors() * lam.cwiseSqrt().cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
}

CcaResult cca_centered(const Mat& X, const Mat& Y, double epsilon) {
  const Eigen::Index m = X.cols();
  if (Y.cols() != m) throw ShapeError("cca: X and Y differ in sample count");
  if (m <= std::max(X.rows(), Y.rows()))
    throw InvalidArgument("cca needs more samples (" + std::to_string(m) + ") than neurons (" +
                          std::to_string(std::max(X.rows(), Y.rows())) + ")");
  if (!(epsilon >= 0)) throw InvalidArgument("cca epsilon must be non-negative");
  const double scale = 1.0 / static_cast<double>(m - 1);
  Mat sxx = (X * X.transpose()) * scale;
  Mat syy = (Y * Y.transpose()) * scale;
  const Mat sxy = (X * Y.transpose()) * scale;
  sxx.diagonal().array() += epsilon;
  syy.diagonal().array() += epsilon;
  const Mat T = inv_sqrt(sxx, epsilon, "X") * sxy * inv_sqrt(syy, epsilon, "Y");
  Eigen::JacobiSVD<Mat> svd(T);
  CcaResult r;
  const auto& sv = svd.singularValues();
  const Eigen::Index k = std::min(X.rows(), Y.rows());
  for (Eigen::Index i = 0; i < k; ++i) r.correlations.push_back(std::clamp(sv(i), 0.0, 1.0));
  std::sort(r.correlations.begin(), r.correlations.end(), std::greater<>());
  double s = 0;
  for (double c : r.correlations) s += c;
  r.similarity = r.correlations.empty() ? 0.0 : s / static_cast<double>(r.correlations.size());
  r.kept_x = static_cast<std::size_t>(X.rows());
  r.kept_y = static_cast<std::size_t>(Y.rows());
  return r;
}

// Leading left singular directions of a centered matrix, descending.
std::pair<Mat, Eigen::VectorXd> principal(const Mat& Xc) {
  Eigen::SelfAdjointEigenSolver<Mat> es(Xc * Xc.transpose());
  if (es.info() != Eigen::Success) throw ConditioningError("eigendecomposition failed in svcca");
  const Eigen::Index d = Xc.rows();
  Mat U(d, d);
  Eigen::VectorXd s2(d);
  for (Eigen::Index i = 0; i < d; ++i) {
    U.col(i) = es.eigenvectors().col(d - 1 - i);
    s2(i) = std::max(0.0, es.eigenvalues()(d - 1 - i));
  }
  return {U, s2};
}

std::size_t rank_for(const Eigen::VectorXd& s2, double threshold) {
  const auto d = static_cast<std::size_t>(s2.size());
  if (threshold >= 1.0) return d;
  const double total = s2.sum();
  if (!(total > 0)) return d;
  double cum = 0;
  for (std::size_t i = 0; i < d; ++i) {
    cum += s2(static_cast<Eigen::Index>(i));
    if (cum >= threshold * total) return i + 1;
  }
  return d;
}

Mat truncate(const Mat& Xc, double threshold) {
  if (threshold >= 1.0) return Xc;
  auto [U, s2] = principal(Xc);
  const auto k = static_cast<Eigen::Index>(rank_for(s2, threshold));
  return U.leftCols(k).transpose() * Xc;
}

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

CcaResult cca(const TensorD& X, const TensorD& Y, double epsilon) {
  return cca_centered(centered(X), centered(Y), epsilon);
}

std::size_t svcca_rank(const TensorD& X, double variance_threshold) {
  if (!(variance_threshold > 0 && variance_threshold <= 1))
    throw InvalidArgument("variance_threshold must lie in (0, 1]");
  return rank_for(principal(centered(X)).second, variance_threshold);
}

CcaResult svcca(const TensorD& X, const TensorD& Y, double variance_threshold, double epsilon) {
  if (!(variance_threshold > 0 && variance_threshold <= 1))
    throw InvalidArgument("variance_threshold must lie in (0, 1]");
  const Mat xc = centered(X), yc = centered(Y);
  if (xc.cols() <= std::max(xc.rows(), yc.rows()))
    throw InvalidArgument("cca needs more samples (" + std::to_string(xc.cols()) + ") than neurons (" +
                          std::to_string(std::max(xc.rows(), yc.rows())) + ")");
  return cca_centered(truncate(xc, variance_threshold), truncate(yc, variance_threshold), epsilon);
}

void CcaSamplingConfig::validate() const {
  std::vector<std::string> problems;
  if (reps < 1) problems.push_back("cca reps must be at least 1");
  if (d < 1) problems.push_back("cca d must be at least 1");
  if (p < 10 * d) problems.push_back("cca p must be at least 10 * d");
  if (!(variance_threshold > 0 && variance_threshold <= 1)) problems.push_back("variance_threshold must lie in (0, 1]");
  if (!(epsilon >= 0)) problems.push_back("epsilon must be non-negative");
  if (!problems.empty()) throw ConfigError(problems);
}

std::vector<std::size_t> choose_datapoints(std::size_t n, std::size_t h, std::size_t w, std::size_t p,
                                           RngStream& stream) {
  const std::size_t hw = h * w;
  if (hw == 0) throw ShapeError("activation spatial extent is empty");
  const std::size_t want = (p + hw - 1) / hw;
  auto perm = rng_permutation(stream, n);
  if (want < n) perm.resize(want);
  std::sort(perm.begin(), perm.end());
  return perm;
}

std::vector<std::size_t> choose_channels(std::size_t c, std::size_t d, RngStream& stream) {
  if (c < 1) throw InvalidArgument("activations have no channels");
  if (c <= d) {
    std::vector<std::size_t> all(c);
    for (std::size_t i = 0; i < c; ++i) all[i] = i;
    return all;
  }
  auto perm = rng_permutation(stream, c);
  perm.resize(d);
  std::sort(perm.begin(), perm.end());
  return perm;
}

ActivationMatrix gather_activations(const TensorF& acts, const std::vector<std::size_t>& datapoints,
                                    const std::vector<std::size_t>& channels) {
  if (acts.rank() != 4) throw ShapeError("activations must be n x h x w x c, got " + shape_str(acts.shape()));
  const std::size_t h = acts.dim(1), w = acts.dim(2), c = acts.dim(3);
  const std::size_t m = datapoints.size() * h * w;
  if (m <= channels.size())
    throw InvalidArgument("sample count " + std::to_string(m) + " does not exceed channel count " +
                          std::to_string(channels.size()));
  ActivationMatrix out;
  out.values = TensorD({channels.size(), m});
  out.datapoints = datapoints;
  out.channels = channels;
  for (std::size_t r = 0; r < channels.size(); ++r) {
    if (channels[r] >= c) throw InvalidArgument("channel index out of range");
    std::size_t col = 0;
    for (std::size_t dp : datapoints)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) out.values[r * m + col++] = acts.at(dp, y, x, channels[r]);
  }
  return out;
}

ActivationMatrix sample_conv_activations(const TensorF& acts, const CcaSamplingConfig& config, RngStream& stream) {
  if (acts.rank() != 4) throw ShapeError("activations must be n x h x w x c, got " + shape_str(acts.shape()));
  const auto dps = choose_datapoints(acts.dim(0), acts.dim(1), acts.dim(2), config.p, stream);
  const auto chs = choose_channels(acts.dim(3), config.d, stream);
  auto out = gather_activations(acts, dps, chs);
  out.plan = stream.label();
  return out;
}

AggregatedCca conv_layer_cca(const TensorF& acts_a, const TensorF& acts_b, const CcaSamplingConfig& config,
                             std::uint64_t master_seed, const std::string& label) {
  config.validate();
  if (acts_a.rank() != 4 || acts_b.rank() != 4) throw ShapeError("activations must be n x h x w x c");
  if (acts_a.dim(0) != acts_b.dim(0) || acts_a.dim(1) != acts_b.dim(1) || acts_a.dim(2) != acts_b.dim(2))
    throw ShapeError("activation geometry mismatch: " + shape_str(acts_a.shape()) + " vs " +
                     shape_str(acts_b.shape()));
  AggregatedCca agg;
  for (std::size_t r = 0; r < config.reps; ++r) {
    const std::string base = label + "/rep/" + std::to_string(r);
    RngStream plan(master_seed, base + "/plan");
    RngStream ca(master_seed, base + "/a"), cb(master_seed, base + "/b");
    const auto dps = choose_datapoints(acts_a.dim(0), acts_a.dim(1), acts_a.dim(2), config.p, plan);
    const auto X = gather_activations(acts_a, dps, choose_channels(acts_a.dim(3), config.d, ca));
    const auto Y = gather_activations(acts_b, dps, choose_channels(acts_b.dim(3), config.d, cb));
    agg.similarities.push_back(svcca(X.values, Y.values, config.variance_threshold, config.epsilon).similarity);
  }
  double s = 0;
  for (double v : agg.similarities) s += v;
  agg.mean = s / static_cast<double>(agg.similarities.size());
  if (agg.similarities.size() > 1) {
    double ss = 0;
    for (double v : agg.similarities) ss += (v - agg.mean) * (v - agg.mean);
    agg.std = std::sqrt(ss / static_cast<double>(agg.similarities.size() - 1));
  }
  return agg;
}

TensorF capture_activations(const ModelGraph& graph, const WeightStore& weights, const DatasetBundle& data,
                            const std::string& layer, std::size_t batch) {
  const auto li = graph.index_of(layer);
  if (!li) throw InvalidArgument("unknown layer '" + layer + "'");
  check_store_matches(weights, graph);
  nn::Network<float> net(graph);
  WeightStore w = weights;
  if (batch == 0) batch = 64;
  const std::size_t n = data.size();
  TensorF out;
  std::vector<std::size_t> idx;
  std::size_t per = 0;
  for (std::size_t start = 0; start < n; start += batch) {
    const std::size_t count = std::min(batch, n - start);
    idx.resize(count);
    for (std::size_t k = 0; k < count; ++k) idx[k] = start + k;
    TensorF a = net.forward(nn::make_batch(data, idx), w, nn::BnMode::infer, nullptr, *li);
    if (a.rank() == 2) a.reshape({a.dim(0), 1, 1, a.dim(1)});
    if (start == 0) {
      out = TensorF({n, a.dim(1), a.dim(2), a.dim(3)});
      per = a.dim(1) * a.dim(2) * a.dim(3);
    }
    std::copy(a.vec().begin(), a.vec().end(), out.raw() + start * per);
  }
  return out;
}

void save_activations(const std::filesystem::path& path, const TensorF& acts, const std::string& layer,
                      const std::string& checkpoint_id) {
  Container c;
  c.tensors.emplace_back("activations", acts);
  c.metadata = {{"layer", layer}, {"checkpoint", checkpoint_id}};
  save_container(path, c);
}

std::vector<SimilarityRow> similarity_report(const std::vector<StorePair>& pairs,
                                             const std::vector<std::string>& layers, const DatasetBundle& data,
                                             const CcaSamplingConfig& config, std::uint64_t seed) {
  config.validate();
  std::vector<SimilarityRow> rows;
  for (const auto& pr : pairs) {
    check_store_matches(pr.a, pr.graph_a);
    check_store_matches(pr.b, pr.graph_b);
    for (const auto& layer : layers) {
      if (!pr.graph_a.index_of(layer) || !pr.graph_b.index_of(layer))
        throw InvalidArgument("pair '" + pr.label + "': layer '" + layer + "' missing from a graph");
      const TensorF A = capture_activations(pr.graph_a, pr.a, data, layer);
      const TensorF B = capture_activations(pr.graph_b, pr.b, data, layer);
      const auto agg = conv_layer_cca(A, B, config, seed, "report/" + pr.label + "/" + layer);
      rows.push_back({pr.label, layer, agg.mean, agg.std, config.reps, config.p, config.d,
                      config.variance_threshold, config.epsilon});
    }
  }
  return rows;
}

std::string similarity_csv(const std::vector<SimilarityRow>& rows) {
  std::string out = "pair,layer,mean_similarity,std_similarity,reps,p,d,variance_threshold,epsilon\n";
  for (const auto& r : rows) {
    out += r.pair + "," + r.layer + "," + num(r.mean) + "," + num(r.std) + "," + std::to_string(r.reps) + "," +
           std::to_string(r.p) + "," + std::to_string(r.d) + "," + num(r.variance_threshold) + "," +
           num(r.epsilon) + "\n";
  }
  return out;
}

std::vector<std::pair<std::string, double>> top_layer_similarity(const std::vector<SimilarityRow>& rows,
                                                                 const ModelGraph& graph, std::size_t k) {
  auto convs = graph.conv_layer_names();
  if (convs.size() > k) convs.erase(convs.begin(), convs.end() - static_cast<std::ptrdiff_t>(k));
  std::vector<std::pair<std::string, double>> out;
  std::map<std::string, std::pair<double, std::size_t>> acc;
  for (const auto& r : rows) {
    if (std::find(convs.begin(), convs.end(), r.layer) == convs.end()) continue;
    auto [it, fresh] = acc.emplace(r.pair, std::pair<double, std::size_t>{0.0, 0});
    if (fresh) out.emplace_back(r.pair, 0.0);
    it->second.first += r.mean;
    it->second.second += 1;
  }
  for (auto& [label, v] : out) v = acc[label].first / static_cast<double>(acc[label].second);
  return out;
}

ScatterFit init_vs_converged_scatter(const std::vector<std::pair<double, double>>& runs) {
  if (runs.size() < 3) throw InvalidArgument("scatter fit needs at least 3 runs");
  ScatterFit f;
  f.points = runs;
  const double n = static_cast<double>(runs.size());
  double mx = 0, my = 0;
  for (auto [x, y] : runs) {
    mx += x;
    my += y;
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0, syy = 0;
  for (auto [x, y] : runs) {
    sxx += (x - mx) * (x - mx);
    sxy += (x - mx) * (y - my);
    syy += (y - my) * (y - my);
  }
  if (!(sxx > 0)) throw InvalidArgument("scatter fit: zero variance in x");
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.r_squared = syy > 0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  return f;
}

}  // namespace trlab
