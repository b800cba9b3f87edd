#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "genprobe/store.hpp"
#include "test_support.hpp"

using namespace genprobe;
using namespace genprobe::store;
using genprobe::testing::scratch_dir;

namespace {

ErrorCode decode_error(const std::vector<std::uint8_t>& bytes) {
  try {
    decode_container(bytes);
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::InvalidArgument;
}

// Builds a container by hand from an index string and payload.
std::vector<std::uint8_t> raw_container(const std::string& index, std::vector<std::uint8_t> payload,
                                        std::uint32_t version = 1) {
  std::vector<std::uint8_t> out = {'G', 'P', 'R', 'B'};
  detail::put_le(out, version);
  detail::put_le(out, static_cast<std::uint64_t>(index.size()));
  out.insert(out.end(), index.begin(), index.end());
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

ErrorCode manifest_error(const std::string& text) {
  std::istringstream in(text);
  try {
    parse_manifest(in);
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::InvalidArgument;
}

const char* kLine =
    R"({"model_id":"m","epoch":1,"optimizer":"sgd","dataset":"blobs","hyperparams":{"lr":"0.1"},)"
    R"("train_accuracy":0.9,"test_accuracy":0.8,"weights_path":"m/e1.gprb"})";

}  // namespace

TEST(Container, EmptyListIsValid) {
  const auto bytes = encode_container({});
  ASSERT_EQ(bytes.size(), kHeaderSize + 2);
  EXPECT_EQ(std::string(bytes.begin() + kHeaderSize, bytes.end()), "{}");
  EXPECT_TRUE(decode_container(bytes).empty());
}

TEST(Container, HeaderLayout) {
  const std::vector<WeightTensor> t = {WeightTensor("w", {1}, {1.0})};
  const auto bytes = encode_container(t);
  EXPECT_EQ(std::memcmp(bytes.data(), "GPRB", 4), 0);
  EXPECT_EQ(bytes[4], 1);
  EXPECT_EQ(bytes[5] | bytes[6] | bytes[7], 0);
  const auto index_len = detail::get_le<std::uint64_t>(bytes.data() + 8);
  EXPECT_EQ(bytes.size(), kHeaderSize + index_len + 8);
  const std::string index(bytes.begin() + kHeaderSize, bytes.begin() + kHeaderSize + static_cast<long>(index_len));
  EXPECT_EQ(index, R"({"w":{"dtype":"f64","nbytes":8,"offset":0,"shape":[1]}})");
  // 1.0 as little-endian IEEE-754 double
  EXPECT_EQ(bytes.back(), 0x3f);
  EXPECT_EQ(bytes[bytes.size() - 2], 0xf0);
}

TEST(Container, F32RoundTripIsBitExact) {
  const std::vector<WeightTensor> t = {WeightTensor("w", {2, 2}, {0.1, -2.5, 3e-8, 7.0}, DType::F32)};
  const auto bytes = encode_container(t);
  const auto back = decode_container(bytes);
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0], t[0]);
  EXPECT_EQ(back[0].data()[0], static_cast<double>(0.1f));
  EXPECT_EQ(encode_container(back), bytes);
}

TEST(Container, F32OverflowRejected) {
  EXPECT_THROW(WeightTensor("w", {1}, {1e300}, DType::F32), Error);
}

TEST(Container, CanonicalOrderingIsByteIdentical) {
  const WeightTensor a("alpha", {2, 3}, {1, 2, 3, 4, 5, 6});
  const WeightTensor b("beta", {3}, {7, 8, 9}, DType::F32);
  const std::vector<WeightTensor> ab = {a, b}, ba = {b, a};
  EXPECT_EQ(encode_container(ab), encode_container(ba));
  const auto back = decode_container(encode_container(ba));
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].name(), "alpha");
  EXPECT_EQ(back[1].name(), "beta");
}

TEST(Container, RandomRoundTripsThroughFiles) {
  const auto dir = scratch_dir("store_roundtrip");
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<WeightTensor> ts;
    const std::size_t count = rng.below(5);
    for (std::size_t k = 0; k < count; ++k) {
      std::vector<std::size_t> shape(1 + rng.below(4));
      std::size_t n = 1;
      for (auto& d : shape) n *= (d = 1 + rng.below(4));
      std::vector<double> data(n);
      for (auto& v : data) v = rng.normal() * std::exp(rng.uniform(-20, 20));
      ts.emplace_back("t" + std::to_string(k), shape, data, rng.below(2) ? DType::F32 : DType::F64);
    }
    const auto path = dir / "c.gprb";
    write_container(ts, path);
    EXPECT_EQ(read_container(path), ts);
  }
}

TEST(Container, DuplicateNamesRejected) {
  const std::vector<WeightTensor> t = {WeightTensor("w", {1}, {1.0}), WeightTensor("w", {1}, {2.0})};
  try {
    encode_container(t);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DuplicateName);
  }
}

TEST(Container, TypedDecodeErrors) {
  const std::vector<WeightTensor> t = {WeightTensor("w", {2}, {1.0, 2.0})};
  auto good = encode_container(t);

  auto bad_magic = good;
  std::memcpy(bad_magic.data(), "XXXX", 4);
  EXPECT_EQ(decode_error(bad_magic), ErrorCode::BadMagic);

  EXPECT_EQ(decode_error({'G', 'P'}), ErrorCode::TruncatedPayload);
  EXPECT_EQ(decode_error({'G', 'P', 'R', 'B', 1, 0, 0, 0}), ErrorCode::TruncatedPayload);

  auto truncated = good;
  truncated.pop_back();
  EXPECT_EQ(decode_error(truncated), ErrorCode::TruncatedPayload);

  auto version = good;
  version[4] = 2;
  EXPECT_EQ(decode_error(version), ErrorCode::UnsupportedVersion);

  auto long_index = good;
  long_index[8] = 0xff;
  EXPECT_EQ(decode_error(long_index), ErrorCode::TruncatedPayload);

  const std::vector<std::uint8_t> eight(8, 0);
  const std::vector<std::uint8_t> sixteen(16, 0);
  EXPECT_EQ(decode_error(raw_container("{", {})), ErrorCode::CorruptIndex);
  EXPECT_EQ(decode_error(raw_container("[]", {})), ErrorCode::CorruptIndex);
  EXPECT_EQ(decode_error(raw_container(R"({"w":{"dtype":"f16","shape":[1],"offset":0,"nbytes":2}})", eight)),
            ErrorCode::CorruptIndex);
  EXPECT_EQ(decode_error(raw_container(R"({"w":{"dtype":"f64","shape":[1],"offset":0,"nbytes":4}})", eight)),
            ErrorCode::CorruptIndex);
  EXPECT_EQ(decode_error(raw_container(R"({"w":{"dtype":"f64","shape":[0],"offset":0,"nbytes":0}})", eight)),
            ErrorCode::CorruptIndex);
  EXPECT_EQ(decode_error(raw_container(R"({"w":{"dtype":"f64","shape":[1],"offset":-1,"nbytes":8}})", eight)),
            ErrorCode::CorruptIndex);
  EXPECT_EQ(decode_error(raw_container(R"({"w":{"dtype":"f64","shape":[1],"nbytes":8}})", eight)),
            ErrorCode::CorruptIndex);
  EXPECT_EQ(decode_error(raw_container(R"({"w":{"dtype":"f64","shape":[2],"offset":0,"nbytes":16}})", eight)),
            ErrorCode::TruncatedPayload);
  EXPECT_EQ(decode_error(raw_container(R"({"a":{"dtype":"f64","shape":[1],"offset":0,"nbytes":8},)"
                                       R"("b":{"dtype":"f64","shape":[1],"offset":4,"nbytes":8}})",
                                       sixteen)),
            ErrorCode::CorruptIndex);
  EXPECT_EQ(decode_error(raw_container(
                R"({"w":{"dtype":"f64","shape":[4294967296,4294967296],"offset":0,"nbytes":0}})", eight)),
            ErrorCode::CorruptIndex);

  std::vector<std::uint8_t> nan_payload;
  detail::put_le(nan_payload, std::bit_cast<std::uint64_t>(std::nan("")));
  EXPECT_EQ(decode_error(raw_container(R"({"w":{"dtype":"f64","shape":[1],"offset":0,"nbytes":8}})", nan_payload)),
            ErrorCode::NonFinite);
}

TEST(Container, MissingFileIsIoError) {
  try {
    read_container(scratch_dir("store_missing") / "nope.gprb");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::IoError);
  }
}

TEST(Container, FuzzedInputsYieldTypedErrors) {
  const std::vector<WeightTensor> t = {WeightTensor("a", {3, 2}, {1, 2, 3, 4, 5, 6}),
                                       WeightTensor("b", {2}, {7, 8}, DType::F32)};
  const auto good = encode_container(t);
  Rng rng(99);
  int typed = 0;
  for (int trial = 0; trial < 500; ++trial) {
    auto bytes = good;
    switch (rng.below(3)) {
      case 0:
        bytes.resize(rng.below(bytes.size()));
        break;
      case 1:
        bytes[rng.below(4)] ^= static_cast<std::uint8_t>(1 + rng.below(255));
        break;
      default:
        for (int k = 0; k < 1 + static_cast<int>(rng.below(4)); ++k) {
          bytes[kHeaderSize + rng.below(bytes.size() - kHeaderSize)] = static_cast<std::uint8_t>(rng.below(256));
        }
    }
    try {
      decode_container(bytes);
      ++typed;  // mutation happened to keep the container valid
    } catch (const Error&) {
      ++typed;
    }
  }
  EXPECT_EQ(typed, 500);
}

TEST(Manifest, EmptyAndSingle) {
  std::istringstream empty("");
  EXPECT_TRUE(parse_manifest(empty).empty());
  std::istringstream one(std::string(kLine) + "\n\n");
  const auto recs = parse_manifest(one);
  ASSERT_EQ(recs.size(), 1u);
  EXPECT_EQ(recs[0].model_id, "m");
  EXPECT_EQ(recs[0].epoch, 1u);
  EXPECT_EQ(recs[0].hyperparams.at("lr"), "0.1");
  EXPECT_DOUBLE_EQ(recs[0].test_accuracy, 0.8);
}

TEST(Manifest, ErrorsCarryTypes) {
  EXPECT_EQ(manifest_error(std::string(kLine) + "\n" + kLine + "\n"), ErrorCode::DuplicateKey);
  EXPECT_EQ(manifest_error("{not json}\n"), ErrorCode::ParseError);
  EXPECT_EQ(manifest_error(R"({"model_id":"m","epoch":-1})"), ErrorCode::ParseError);
  std::string percent = kLine;
  percent.replace(percent.find("\"epoch\":1"), 9, "\"epoch\":2");
  percent.replace(percent.find("0.9"), 3, "90");
  percent.replace(percent.find("0.8"), 3, "80");
  EXPECT_EQ(manifest_error(percent + "\n"), ErrorCode::InvalidArgument);  // valid alone
  EXPECT_EQ(manifest_error(std::string(kLine) + "\n" + percent + "\n"), ErrorCode::ScaleMixing);
}

TEST(Manifest, ParseErrorReportsLineNumber) {
  std::istringstream in(std::string(kLine) + "\n\n{\n");
  try {
    parse_manifest(in);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ParseError);
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
  }
}

TEST(Manifest, AppendReadRoundTrip) {
  const auto dir = scratch_dir("manifest");
  const auto path = dir / "manifest.jsonl";
  std::vector<RunRecord> recs;
  for (int e = 0; e < 3; ++e) {
    RunRecord r{"model-" + std::to_string(e % 2), static_cast<std::uint64_t>(e), "adam", "blobs",
                {{"lr", "0.01"}, {"wd", "0.001"}}, 0.5 + 0.1 * e, 0.4 + 0.1 * e, "w/" + std::to_string(e) + ".gprb"};
    append_record(path, r);
    recs.push_back(r);
  }
  EXPECT_EQ(read_manifest(path), recs);
  EXPECT_EQ(resolve_weights(path, recs[0]), dir / "w/0.gprb");
  RunRecord abs = recs[0];
  abs.weights_path = "/tmp/x.gprb";
  EXPECT_EQ(resolve_weights(path, abs), std::filesystem::path("/tmp/x.gprb"));
}

TEST(Manifest, MissingFileIsIoError) {
  try {
    read_manifest(scratch_dir("manifest_missing") / "none.jsonl");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::IoError);
  }
}
