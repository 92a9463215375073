#include <cmath>

#include <gtest/gtest.h>

#include "helpers.hpp"
#include "trlab/init.hpp"
#include "trlab/weights.hpp"
#include "trlab/zoo.hpp"

using namespace trlab;
using trlab::testing::TempDir;

TEST(Zoo, TableOneParameterAnchors) {
  const InputShape in{587, 587, 3};
  const std::pair<CbrVariant, double> anchors[] = {
      {CbrVariant::Small, 2108672}, {CbrVariant::LargeT, 8532480}, {CbrVariant::LargeW, 8432128}};
  for (auto [v, expect] : anchors) {
    const double n = static_cast<double>(param_count(build_cbr(v, in, 5)));
    EXPECT_NEAR(n / expect, 1.0, 0.05) << cbr_variant_name(v) << " " << n;
  }
}

TEST(Zoo, TinyDeskLayout) {
  const ModelGraph g = build_cbr(CbrVariant::TinyDesk, {64, 64, 3}, 5);
  EXPECT_EQ(g.conv_layer_names(), (std::vector<std::string>{"conv1", "conv2", "conv3", "conv4"}));
  const auto geo = layer_geometry(g);
  ASSERT_EQ(geo.size(), g.layers.size());
  EXPECT_EQ(geo[g.require_index("pool4")].height, 4u);
  EXPECT_EQ(geo.back().channels, 5u);
  // conv: k*k*cin*cout + 2 affine; head: 128*5 + 5
  const std::size_t expect = (25 * 3 * 16 + 32) + (25 * 16 * 32 + 64) + (25 * 32 * 64 + 128) +
                             (25 * 64 * 128 + 256) + 128 * 5 + 5;
  EXPECT_EQ(param_count(g), expect);
}

TEST(Zoo, SerializeRoundTrip) {
  for (auto v : {CbrVariant::TinyDesk, CbrVariant::SmallDesk, CbrVariant::LargeT}) {
    const ModelGraph g = build_cbr(v, {64, 48, 3}, 4);
    const ModelGraph back = deserialize_graph(g.serialize(), g.variant_tag);
    EXPECT_EQ(back, g);
    EXPECT_EQ(back.fingerprint(), g.fingerprint());
  }
  EXPECT_THROW(deserialize_graph("input=4x4x3;classes=2;conv1:bogus"), InvalidArgument);
  EXPECT_THROW(deserialize_graph("nonsense"), InvalidArgument);
}

TEST(Zoo, ValidationCatchesTooSmallInputs) {
  EXPECT_THROW(build_cbr(CbrVariant::TinyDesk, {12, 12, 3}, 2), InvalidArgument);
  EXPECT_NO_THROW(build_cbr(CbrVariant::TinyDesk, {20, 20, 3}, 2));
  EXPECT_THROW(build_cbr(CbrVariant::TinyDesk, {64, 64, 3}, 0), InvalidArgument);
  EXPECT_THROW(parse_cbr_variant("Huge"), InvalidArgument);
  EXPECT_EQ(parse_cbr_variant("CBR-Small"), CbrVariant::Small);
}

TEST(Zoo, SlimHalvesLaterConvs) {
  const ModelGraph g = build_cbr(CbrVariant::TinyDesk, {64, 64, 3}, 5);
  const ModelGraph s = slim(g, "conv3", 0.5);
  EXPECT_EQ(s.layer("conv2").out_channels, 32);
  EXPECT_EQ(s.layer("conv3").out_channels, 32);
  EXPECT_EQ(s.layer("conv4").out_channels, 64);
  EXPECT_NE(s.fingerprint(), g.fingerprint());
  EXPECT_LT(param_count(s), param_count(g));
  EXPECT_THROW(slim(g, "nope", 0.5), InvalidArgument);
}

TEST(Weights, LayoutMatchesGraph) {
  const ModelGraph g = trlab::testing::small_tinydesk();
  const WeightStore w(g);
  EXPECT_EQ(w.size(), parameter_layout(g).size());
  EXPECT_NO_THROW(check_store_matches(w, g));
  const ModelGraph other = build_cbr(CbrVariant::SmallDesk, {20, 20, 3}, 3);
  EXPECT_THROW(check_store_matches(w, other), Error);
  EXPECT_EQ(w.at("conv1/kernel").shape(), (Shape{5, 5, 3, 16}));
  EXPECT_EQ(w.at("head/weight").shape(), (Shape{128, 3}));
}

TEST(Weights, CheckpointRoundTripIsBitwise) {
  TempDir dir("ckpt");
  const ModelGraph g = trlab::testing::small_tinydesk();
  const WeightStore w = random_init(g, 5);
  save_checkpoint(dir / "w.tnsr", w, g, {{"global_step", "12"}});
  Metadata meta;
  const auto [g2, w2] = load_model(dir / "w.tnsr", &meta);
  EXPECT_TRUE(w2.bit_equal(w));
  EXPECT_EQ(g2, g);
  EXPECT_EQ(meta.at("global_step"), "12");
  EXPECT_EQ(meta.at("graph_fingerprint"), g.fingerprint());
  EXPECT_EQ(weights_digest(w2), weights_digest(w));
}

TEST(Weights, CheckpointWithoutGraphCannotRebuildIt) {
  TempDir dir("ckpt_nograph");
  const ModelGraph g = trlab::testing::small_tinydesk();
  save_checkpoint(dir / "w.tnsr", random_init(g, 1));
  EXPECT_NO_THROW(load_checkpoint(dir / "w.tnsr"));
  EXPECT_THROW(load_model(dir / "w.tnsr"), InvalidArgument);
}

TEST(Weights, DigestChangesWithAnyBit) {
  const ModelGraph g = trlab::testing::small_tinydesk();
  WeightStore w = random_init(g, 2);
  const std::string d0 = weights_digest(w);
  w.at("conv4/beta")[7] = std::nextafter(w.at("conv4/beta")[7], 1.0f);
  EXPECT_NE(weights_digest(w), d0);
}
