#include <fstream>

#include <gtest/gtest.h>

#include "helpers.hpp"
#include "json.hpp"
#include "trlab/container.hpp"

using namespace trlab;
using trlab::testing::TempDir;

TEST(Tensor, ShapeAndDataMustAgree) {
  EXPECT_THROW(TensorF({2, 3}, std::vector<float>(5)), ShapeError);
  TensorF t({2, 3}, 1.5f);
  EXPECT_EQ(t.size(), 6u);
  EXPECT_THROW(t.reshape({4, 2}), ShapeError);
  t.reshape({3, 2});
  EXPECT_EQ(t.dim(0), 3u);
}

TEST(Tensor, ScalarHasOneElement) {
  TensorD s(Shape{});
  EXPECT_EQ(s.size(), 1u);
  EXPECT_EQ(s.rank(), 0u);
}

TEST(Tensor, BitEqualDistinguishesSignedZero) {
  TensorF a({1}, 0.0f), b({1}, -0.0f);
  EXPECT_TRUE(a == b);
  EXPECT_FALSE(a.bit_equal(b));
}

TEST(Container, RoundTripKeepsDtypesShapesAndMetadata) {
  TempDir dir("container");
  Container c;
  c.tensors.emplace_back("a", trlab::testing::random_tensor<float>({2, 3, 4}, 1));
  c.tensors.emplace_back("b", trlab::testing::random_tensor<double>({5}, 2));
  c.tensors.emplace_back("scalar", TensorD({}, 3.25));
  c.metadata["seed"] = "7";
  c.metadata["note"] = "unicode \xc3\xa9";
  save_container(dir / "c.tnsr", c);

  const Container r = load_container(dir / "c.tnsr");
  ASSERT_EQ(r.tensors.size(), 3u);
  EXPECT_EQ(r.tensors[0].first, "a");
  EXPECT_TRUE(std::get<TensorF>(r.tensors[0].second).bit_equal(std::get<TensorF>(c.tensors[0].second)));
  EXPECT_TRUE(std::get<TensorD>(r.tensors[1].second).bit_equal(std::get<TensorD>(c.tensors[1].second)));
  EXPECT_EQ(std::get<TensorD>(r.tensors[2].second)[0], 3.25);
  EXPECT_EQ(r.metadata, c.metadata);
  EXPECT_EQ(r.meta_or("missing", "x"), "x");
  EXPECT_THROW(r.f32("b"), Error);
}

TEST(Container, DuplicateNamesRejectedOnSave) {
  TempDir dir("container_dup");
  Container c;
  c.tensors.emplace_back("a", TensorF({1}));
  c.tensors.emplace_back("a", TensorF({1}));
  try {
    save_container(dir / "d.tnsr", c);
    FAIL();
  } catch (const ContainerError& e) {
    EXPECT_EQ(e.kind(), ContainerError::Kind::duplicate_name);
  }
}

namespace {

std::string read_all(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

void write_all(const std::filesystem::path& p, const std::string& s) {
  std::ofstream f(p, std::ios::binary);
  f << s;
}

ContainerError::Kind load_kind(const std::filesystem::path& p) {
  try {
    load_container(p);
  } catch (const ContainerError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "load succeeded";
  return ContainerError::Kind::io;
}

struct Corruption : ::testing::Test {
  TempDir dir{"corrupt"};
  std::string bytes;
  void SetUp() override {
    Container c;
    c.tensors.emplace_back("w", trlab::testing::random_tensor<float>({4, 4}, 3));
    c.tensors.emplace_back("v", trlab::testing::random_tensor<float>({3}, 4));
    save_container(dir / "ok.tnsr", c);
    bytes = read_all(dir / "ok.tnsr");
  }
  std::uint64_t header_len() const {
    std::uint64_t h = 0;
    for (int i = 0; i < 8; ++i) h |= std::uint64_t(static_cast<unsigned char>(bytes[8 + i])) << (8 * i);
    return h;
  }
  std::string with_manifest(const nlohmann::json& j, std::string payload) const {
    const std::string m = j.dump();
    std::string out = std::string(kContainerMagic, 8);
    for (int i = 0; i < 8; ++i) out += static_cast<char>((m.size() >> (8 * i)) & 0xff);
    return out + m + payload;
  }
  nlohmann::json manifest() const { return nlohmann::json::parse(bytes.substr(16, header_len())); }
  std::string payload() const { return bytes.substr(16 + header_len()); }
};

}  // namespace

TEST_F(Corruption, MissingFileIsIoError) { EXPECT_EQ(load_kind(dir / "nope.tnsr"), ContainerError::Kind::io); }

TEST_F(Corruption, BadMagic) {
  std::string b = bytes;
  b[0] = 'X';
  write_all(dir / "x.tnsr", b);
  EXPECT_EQ(load_kind(dir / "x.tnsr"), ContainerError::Kind::bad_magic);
}

TEST_F(Corruption, TruncatedHeader) {
  write_all(dir / "x.tnsr", bytes.substr(0, 12));
  EXPECT_EQ(load_kind(dir / "x.tnsr"), ContainerError::Kind::truncated);
}

TEST_F(Corruption, TruncatedManifest) {
  write_all(dir / "x.tnsr", bytes.substr(0, 16 + header_len() / 2));
  EXPECT_EQ(load_kind(dir / "x.tnsr"), ContainerError::Kind::truncated);
}

TEST_F(Corruption, TruncatedPayload) {
  write_all(dir / "x.tnsr", bytes.substr(0, bytes.size() - 3));
  EXPECT_EQ(load_kind(dir / "x.tnsr"), ContainerError::Kind::truncated);
}

TEST_F(Corruption, UnparsableManifest) {
  std::string b = bytes;
  b[16] = '#';
  write_all(dir / "x.tnsr", b);
  EXPECT_EQ(load_kind(dir / "x.tnsr"), ContainerError::Kind::bad_manifest);
}

TEST_F(Corruption, ByteLengthDisagreesWithShape) {
  auto j = manifest();
  j["entries"][0]["shape"] = {4, 5};
  write_all(dir / "x.tnsr", with_manifest(j, payload()));
  EXPECT_EQ(load_kind(dir / "x.tnsr"), ContainerError::Kind::length_mismatch);
}

TEST_F(Corruption, DuplicateNameInManifest) {
  auto j = manifest();
  j["entries"][1]["name"] = j["entries"][0]["name"];
  write_all(dir / "x.tnsr", with_manifest(j, payload()));
  EXPECT_EQ(load_kind(dir / "x.tnsr"), ContainerError::Kind::duplicate_name);
}

TEST_F(Corruption, UnknownDtype) {
  auto j = manifest();
  j["entries"][0]["dtype"] = "f16";
  write_all(dir / "x.tnsr", with_manifest(j, payload()));
  EXPECT_EQ(load_kind(dir / "x.tnsr"), ContainerError::Kind::bad_manifest);
}

TEST_F(Corruption, OverlappingEntries) {
  auto j = manifest();
  j["entries"][1]["offset"] = 0;
  j["entries"][1]["byte_len"] = 12;
  write_all(dir / "x.tnsr", with_manifest(j, payload()));
  EXPECT_EQ(load_kind(dir / "x.tnsr"), ContainerError::Kind::bad_manifest);
}
