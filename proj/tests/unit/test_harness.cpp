#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "helpers.hpp"
#include "json.hpp"
#include "trlab/filters.hpp"
#include "trlab/harness.hpp"

using namespace trlab;
using trlab::testing::TempDir;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

ExperimentConfig tiny_config(const TempDir& dir, const std::string& seed = "1") {
  ExperimentConfig c;
  c.set("seed", seed);
  c.set("out", dir.path().string());
  c.set("data.n", "64");
  c.set("data.size", "32");
  c.set("data.classes", "3");
  c.set("data.test_fraction", "0.25");
  c.set("train.batch", "4");
  c.set("train.steps", "12");
  c.set("eval.every", "5");
  c.set("threshold.value", "0.5");
  return c;
}

}  // namespace

TEST(Transfuse, PrefixBitEqualAtEveryBoundary) {
  const ModelGraph g = trlab::testing::small_tinydesk(32, 3);
  const WeightStore donor = random_init(g, 100);
  const WeightStore plain = random_init(g, 7);
  for (std::size_t L = 0; L < g.layers.size(); ++L) {
    const WeightStore t = transfuse(donor, g, g.layers[L].name, "random", 7);
    for (const auto& e : t.entries()) {
      const bool prefix = g.require_index(e.layer) <= L;
      EXPECT_TRUE(e.value.bit_equal(prefix ? donor.at(e.name) : plain.at(e.name))) << g.layers[L].name << " " << e.name;
    }
  }
  EXPECT_TRUE(transfuse(donor, g, "none", "random", 7).bit_equal(plain));
  EXPECT_THROW(transfuse(donor, g, "conv9", "random", 7), InvalidArgument);
}

TEST(Transfuse, ResetStatsAndShapeChecks) {
  const ModelGraph g = trlab::testing::small_tinydesk(32, 3);
  WeightStore donor = random_init(g, 100);
  donor.at("conv1/moving_mean").fill(3.0f);
  const WeightStore t = transfuse(donor, g, "conv2", "random", 1, BnStats::reset);
  for (float v : t.at("conv1/moving_mean").data()) EXPECT_EQ(v, 0.0f);
  for (float v : t.at("conv2/moving_var").data()) EXPECT_EQ(v, 1.0f);
  EXPECT_TRUE(t.at("conv1/kernel").bit_equal(donor.at("conv1/kernel")));
  const ModelGraph slimmed = slim(g, "conv2", 0.5);
  EXPECT_NO_THROW(transfuse(donor, slimmed, "conv1", "random", 1));
  EXPECT_THROW(transfuse(donor, slimmed, "conv2", "random", 1), ShapeError);
}

TEST(Freeze, VariantsDifferOnlyInSuffix) {
  const ModelGraph g = trlab::testing::small_tinydesk(32, 3);
  WeightStore donor = random_init(g, 100);
  for (auto& e : donor.entries())
    if (is_bn_role(e.role)) e.value.fill(e.role == Role::moving_var ? 2.0f : 0.25f);
  const FrozenInit full = apply_freeze({FreezeVariant::full_pretrained, "conv2", 5}, &donor, g);
  const FrozenInit pre = apply_freeze({FreezeVariant::prefix_pretrained_rest_random, "conv2", 5}, &donor, g);
  EXPECT_EQ(full.mask, pre.mask);
  const std::size_t L = g.require_index("conv2");
  for (const auto& e : full.weights.entries()) {
    const bool prefix = g.require_index(e.layer) <= L;
    EXPECT_EQ(full.mask.at(e.name), !prefix);
    EXPECT_EQ(pre.weights.at(e.name).bit_equal(e.value), prefix) << e.name;
    EXPECT_TRUE(e.value.bit_equal(donor.at(e.name)));
  }
  const FrozenInit base = apply_freeze({FreezeVariant::random_baseline, "conv2", 5}, nullptr, g);
  EXPECT_TRUE(base.weights.bit_equal(random_init(g, 5)));
  EXPECT_THROW(apply_freeze({FreezeVariant::full_pretrained, "conv2", 5}, nullptr, g), InvalidArgument);
}

TEST(StepsToThreshold, FirstCrossing) {
  nn::TrainingLog log;
  log.entries = {{0, 1, {0.5}, 0, 0}, {10, 1, {0.84}, 0, 0}, {20, 1, {0.9}, 0, 0}, {30, 1, {0.8}, 0, 0}};
  EXPECT_EQ(steps_to_threshold(log, {}, 0.85), 20u);
  EXPECT_FALSE(steps_to_threshold(log, {}, 0.95).has_value());
  EXPECT_THROW(steps_to_threshold(nn::TrainingLog{}, {}, 0.5), InvalidArgument);
}

TEST(Config, DefaultsParsingAndProblems) {
  const ExperimentConfig d;
  EXPECT_EQ(d.get("graph.variant"), "TinyDesk");
  EXPECT_EQ(d.get_size("train.batch"), 8u);
  EXPECT_THROW(d.validate(), ConfigError);  // seed is required
  const ExperimentConfig c = ExperimentConfig::parse("# comment\nseed = 4\n\ntrain.lr = 0.01  \n");
  EXPECT_EQ(c.get_double("train.lr"), 0.01);
  EXPECT_NO_THROW(c.validate());
  EXPECT_THROW(ExperimentConfig::parse("nonsense.key = 1\n"), ConfigError);
  EXPECT_THROW(ExperimentConfig::parse("just text\n"), ConfigError);

  ExperimentConfig bad;
  bad.set("train.lr", "fast");
  bad.set("init.scheme", "meanvar");
  bad.set("train.hflip", "maybe");
  try {
    bad.validate();
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_GE(e.problems().size(), 4u);  // seed, lr, donor, hflip
  }
}

TEST(Config, FingerprintCoversResultKeysOnly) {
  TempDir dir("fp");
  ExperimentConfig a = tiny_config(dir);
  ExperimentConfig b = a;
  b.set("label", "other name");
  b.set("out", (dir / "elsewhere").string());
  EXPECT_EQ(a.fingerprint(), b.fingerprint());
  b.set("seed", "2");
  EXPECT_NE(a.fingerprint(), b.fingerprint());

  std::ofstream(dir / "d1.bin") << "abc";
  std::ofstream(dir / "d2.bin") << "abc";
  ExperimentConfig x = a, y = a;
  x.set("data.path", (dir / "d1.bin").string());
  y.set("data.path", (dir / "d2.bin").string());
  EXPECT_EQ(x.fingerprint(), y.fingerprint());
  std::ofstream(dir / "d2.bin") << "abd";
  EXPECT_NE(x.fingerprint(), y.fingerprint());
  EXPECT_EQ(ExperimentConfig::parse(a.text()).fingerprint(), a.fingerprint());
}

TEST(Experiment, RunsPersistsAndCaches) {
  TempDir dir("exp");
  const ExperimentConfig c = tiny_config(dir);
  const ExperimentResult r = run_experiment(c);
  EXPECT_FALSE(r.cached);
  EXPECT_EQ(r.steps_run, 12u);
  for (const char* f : {"config", "manifest.json", "log.csv", "result.json", "init.tnsr", "final.tnsr"})
    EXPECT_TRUE(std::filesystem::exists(r.dir / f)) << f;
  EXPECT_EQ(r.dir, dir.path() / c.fingerprint());
  const auto man = nlohmann::json::parse(slurp(r.dir / "manifest.json"));
  EXPECT_EQ(man.at("config").at("seed"), "1");
  EXPECT_EQ(man.at("graph_fingerprint"), config_graph(c).fingerprint());

  const ExperimentResult again = run_experiment(c);
  EXPECT_TRUE(again.cached);
  EXPECT_EQ(again.log.csv(), r.log.csv());
  EXPECT_EQ(again.steps_to_threshold, r.steps_to_threshold);

  const std::string before = slurp(r.dir / "log.csv");
  const ExperimentConfig replay = ExperimentConfig::load(r.dir / "config");
  const ExperimentResult forced = run_experiment(replay, true);
  EXPECT_FALSE(forced.cached);
  EXPECT_EQ(slurp(r.dir / "log.csv"), before);
  const auto [g, w] = load_model(r.dir / "final.tnsr");
  EXPECT_EQ(g, config_graph(c));
}

TEST(Experiment, FreezeMaskRecordedAndHonoured) {
  TempDir dir("exp_freeze");
  ExperimentConfig donor_cfg = tiny_config(dir, "9");
  const ExperimentResult donor = run_experiment(donor_cfg);
  ExperimentConfig c = tiny_config(dir, "2");
  c.set("init.scheme", "freeze");
  c.set("init.boundary", "conv2");
  c.set("init.donor", (donor.dir / "final.tnsr").string());
  const ExperimentResult r = run_experiment(c);
  const auto man = nlohmann::json::parse(slurp(r.dir / "manifest.json"));
  EXPECT_EQ(man.at("freeze_mask").at("conv1/kernel"), false);
  EXPECT_EQ(man.at("freeze_mask").at("conv3/kernel"), true);
  const WeightStore init = load_checkpoint(r.dir / "init.tnsr");
  const WeightStore fin = load_checkpoint(r.dir / "final.tnsr");
  EXPECT_TRUE(fin.at("conv2/moving_var").bit_equal(init.at("conv2/moving_var")));
  EXPECT_FALSE(fin.at("conv3/kernel").bit_equal(init.at("conv3/kernel")));
}

TEST(Experiment, ErrorsNameTheirStage) {
  TempDir dir("exp_err");
  ExperimentConfig c = tiny_config(dir);
  c.set("data.size", "16");
  c.set("graph.variant", "Small");
  try {
    run_experiment(c);
    FAIL();
  } catch (const ConfigError&) {
    FAIL() << "config is valid; the failure belongs to a stage";
  } catch (const Error& e) {
    EXPECT_EQ(std::string(e.what()).rfind("graph:", 0), 0u) << e.what();
  }
  ExperimentConfig slimmed = tiny_config(dir);
  slimmed.set("graph.slim_from", "conv2");
  EXPECT_THROW(slim_hybrid(slimmed), ConfigError);
}

TEST(Report, MergedRowsAndAbsentThresholds) {
  TempDir dir("report");
  ExperimentConfig a = tiny_config(dir, "1");
  a.set("label", "first");
  ExperimentConfig b = tiny_config(dir, "2");
  b.set("threshold.value", "1");
  const auto results = run_sweep({a, b}, 1);
  const RunReport rep = report_runs({results[0].dir, results[1].dir});
  EXPECT_EQ(rep.curve_rows, results[0].log.entries.size() + results[1].log.entries.size());
  EXPECT_EQ(rep.curves_csv.substr(0, rep.curves_csv.find('\n')), "run,step,loss,auc_mean,lr");
  std::istringstream lines(rep.summary_csv);
  std::string header, first, second;
  std::getline(lines, header);
  std::getline(lines, first);
  std::getline(lines, second);
  EXPECT_EQ(header, "run,steps_to_threshold,metric,threshold");
  EXPECT_EQ(first.substr(0, 6), "first,");
  EXPECT_NE(second.find(",absent,"), std::string::npos) << second;
  EXPECT_THROW(report_runs({}), InvalidArgument);
  EXPECT_THROW(report_runs({dir / "missing"}), Error);
}

TEST(Filters, PgmRoundTripAndNormalization) {
  TempDir dir("pgm");
  TensorF k({3, 3, 2, 2});
  for (std::size_t i = 0; i < k.size(); ++i) k[i] = static_cast<float>(i % 7);
  for (std::size_t y = 0; y < 3; ++y)
    for (std::size_t x = 0; x < 3; ++x)
      for (std::size_t c = 0; c < 2; ++c) k.at(y, x, c, 1) = 0.5f;
  const GrayImage img = filter_image(k, 0);
  EXPECT_EQ(*std::min_element(img.pixels.begin(), img.pixels.end()), 0);
  EXPECT_EQ(*std::max_element(img.pixels.begin(), img.pixels.end()), 255);
  const GrayImage flat = filter_image(k, 1);
  for (auto p : flat.pixels) EXPECT_EQ(p, 128);
  write_pgm(dir / "a.pgm", img);
  const GrayImage back = read_pgm(dir / "a.pgm");
  EXPECT_EQ(back.pixels, img.pixels);
  EXPECT_EQ(slurp(dir / "a.pgm").substr(0, 10), "P5 3 3 255");
}

TEST(Filters, ExportCountsAndMontageGrid) {
  TempDir dir("export");
  const ModelGraph g = build_cbr(CbrVariant::LargeW, {64, 64, 3}, 2);
  const WeightStore w = random_init(g, 1);
  const FilterExport ex = export_filters(w, "conv1", dir.path());
  EXPECT_EQ(ex.files.size(), 64u);
  const GrayImage m = read_pgm(ex.montage);
  EXPECT_EQ(m.width, 8u * 8 + 1);
  EXPECT_EQ(m.height, 8u * 8 + 1);
  EXPECT_EQ(m.pixels[0], 0);
  EXPECT_THROW(export_filters(w, "pool1", dir.path()), InvalidArgument);
}
