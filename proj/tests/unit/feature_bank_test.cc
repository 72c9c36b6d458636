#include "ufd/feature_bank.h"

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <limits>
#include <functional>
#include <map>
#include <set>
#include <random>

#include "oracles.h"
#include "ufd/error.h"

namespace {

using ufd::BankRecord;
using ufd::ErrorCode;
using ufd::FeatureBank;
using ufd::Label;

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const ufd::Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no ufd::Error thrown";
  return ErrorCode::kInvalidArgument;
}

BankRecord rec(std::vector<float> v, Label l, std::int32_t cls = -1, std::string tag = "", std::string ref = "") {
  return {std::move(v), l, cls, std::move(tag), std::move(ref)};
}

FeatureBank random_full_bank(std::mt19937_64& gen, std::size_t n, std::size_t dim, const std::string& tag = "src") {
  std::vector<BankRecord> records;
  std::uniform_int_distribution<int> cls(-1, 19);
  std::uniform_int_distribution<int> len(0, 12);
  std::uniform_int_distribution<int> ch('a', 'z');
  for (std::size_t i = 0; i < n; ++i) {
    BankRecord r;
    r.vector = testutil::gaussian_vector(gen, dim);
    r.label = (gen() & 1) ? Label::kFake : Label::kReal;
    r.class_id = cls(gen);
    r.source_tag = tag;
    const int l = len(gen);
    for (int c = 0; c < l; ++c) r.image_ref.push_back(static_cast<char>(ch(gen)));
    records.push_back(std::move(r));
  }
  return ufd::build_bank(std::move(records), dim, {{"encoder_id", "enc"}, {"layer_id", "L24"}, {"run", 7}});
}

TEST(BuildBank, TwoRecordsPreserveOrder) {
  const auto b = ufd::build_bank({rec({1, 0, 0}, Label::kReal), rec({0, 1, 0}, Label::kFake)}, 3);
  EXPECT_EQ(b.dim(), 3u);
  EXPECT_EQ(b.size(), 2u);
  EXPECT_EQ(b.label(0), Label::kReal);
  EXPECT_EQ(b.label(1), Label::kFake);
  EXPECT_EQ(b.raw(1)[1], 1.0f);
  EXPECT_TRUE(b.metadata().at("norm_precomputed").get<bool>());
  EXPECT_EQ(b.encoder_id(), "unknown");
  EXPECT_EQ(b.layer_id(), "unknown");
}

TEST(BuildBank, NonFiniteIsItsOwnError) {
  const float nan = std::numeric_limits<float>::quiet_NaN();
  EXPECT_EQ(code_of([&] { ufd::build_bank({rec({1, nan, 0}, Label::kReal)}, 3); }), ErrorCode::kNonFiniteValue);
  const float inf = std::numeric_limits<float>::infinity();
  EXPECT_EQ(code_of([&] { ufd::build_bank({rec({inf, 0, 0}, Label::kReal)}, 3); }), ErrorCode::kNonFiniteValue);
}

TEST(BuildBank, Rejections) {
  EXPECT_EQ(code_of([] { ufd::build_bank({rec({1, 0}, Label::kReal)}, 3); }), ErrorCode::kDimensionMismatch);
  EXPECT_EQ(code_of([] { ufd::build_bank({rec({0, 0, 0}, Label::kReal)}, 3); }), ErrorCode::kZeroNormVector);
  EXPECT_EQ(code_of([] { ufd::build_bank({}, 3); }), ErrorCode::kEmptyInput);
  EXPECT_EQ(code_of([] {
              ufd::build_bank({rec({1, 0, 0}, Label::kReal, 5)}, 3, {{"class_ids", {1, 2}}});
            }),
            ErrorCode::kUnknownClassId);
}

TEST(BuildBank, UnitCacheIsNormalized) {
  std::mt19937_64 gen(1);
  const auto b = random_full_bank(gen, 500, 13);
  for (std::size_t i = 0; i < b.size(); ++i) {
    double n = 0;
    for (float v : b.unit(i)) n += double(v) * v;
    EXPECT_LT(std::abs(std::sqrt(n) - 1.0), 1e-6);
  }
}

TEST(BuildBank, MetadataCollectsSourcesAndClasses) {
  const auto b = ufd::build_bank(
      {rec({1, 0}, Label::kReal, 3, "lsun"), rec({0, 1}, Label::kFake, 1, "progan"), rec({1, 1}, Label::kFake, 3, "lsun")}, 2);
  EXPECT_EQ(b.metadata().at("sources"), nlohmann::json({"lsun", "progan"}));
  EXPECT_EQ(b.metadata().at("class_ids"), nlohmann::json({1, 3}));
}

TEST(BankFormat, SingleEntryRoundTrip) {
  const auto b = ufd::build_bank({rec({0.5f, -2.0f}, Label::kFake)}, 2);
  EXPECT_EQ(ufd::decode_bank(ufd::encode_bank(b)), b);
}

TEST(BankFormat, RandomRoundTripIsBitExact) {
  std::mt19937_64 gen(2);
  for (int t = 0; t < 50; ++t) {
    const auto b = random_full_bank(gen, 1 + gen() % 40, 1 + gen() % 20);
    const auto bytes = ufd::encode_bank(b);
    const auto back = ufd::decode_bank(bytes);
    ASSERT_EQ(back, b);
    EXPECT_EQ(ufd::encode_bank(back), bytes);
  }
}

TEST(BankFormat, SaveLoadThroughFile) {
  std::mt19937_64 gen(3);
  const auto b = random_full_bank(gen, 100, 8);
  const auto dir = testutil::scratch_dir("bank_file");
  ufd::save_bank(b, dir / "b.ufdb");
  EXPECT_EQ(ufd::load_bank(dir / "b.ufdb"), b);
  std::filesystem::remove_all(dir);
}

// Header 24 bytes + metadata, per entry 1 + 4 + 2 + tag + 2 + ref + 8 * dim,
// trailing 4-byte checksum.
std::size_t hand_size(const FeatureBank& b) {
  std::size_t n = 4 + 4 + 4 + 8 + 4 + b.metadata().dump().size() + 4;
  for (std::size_t i = 0; i < b.size(); ++i)
    n += 1 + 4 + 2 + b.source_tag(i).size() + 2 + b.image_ref(i).size() + 2 * 4 * b.dim();
  return n;
}

TEST(BankFormat, FileSizeMatchesClosedForm) {
  std::mt19937_64 gen(4);
  const auto b = random_full_bank(gen, 10000, 12);
  const auto bytes = ufd::encode_bank(b);
  EXPECT_EQ(bytes.size(), hand_size(b));
  EXPECT_EQ(ufd::encoded_size(b), bytes.size());
}

TEST(BankFormat, HeaderLayout) {
  const auto b = ufd::build_bank({rec({1, 2, 3}, Label::kFake, -1, "t", "r")}, 3);
  const auto bytes = ufd::encode_bank(b);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "UFDB");
  auto u32 = [&](std::size_t off) {
    return std::uint32_t(bytes[off]) | std::uint32_t(bytes[off + 1]) << 8 | std::uint32_t(bytes[off + 2]) << 16 |
           std::uint32_t(bytes[off + 3]) << 24;
  };
  EXPECT_EQ(u32(4), 1u);
  EXPECT_EQ(u32(8), 3u);
  EXPECT_EQ(bytes[12], 1);
  const std::size_t meta_len = u32(20);
  EXPECT_EQ(nlohmann::json::parse(bytes.begin() + 24, bytes.begin() + 24 + meta_len), b.metadata());
  EXPECT_EQ(bytes[24 + meta_len], 1);  // label fake
}

TEST(BankFormat, CorruptionIsDetected) {
  std::mt19937_64 gen(5);
  const auto b = random_full_bank(gen, 20, 4);
  const auto bytes = ufd::encode_bank(b);
  for (std::size_t pos = 24; pos < bytes.size(); pos += 7) {
    auto bad = bytes;
    bad[pos] ^= 0x10;
    EXPECT_THROW(ufd::decode_bank(bad), ufd::Error) << "flip at " << pos;
  }
  auto payload_flip = bytes;
  payload_flip[bytes.size() - 10] ^= 1;
  EXPECT_EQ(code_of([&] { ufd::decode_bank(payload_flip); }), ErrorCode::kChecksumMismatch);
}

TEST(BankFormat, HeaderErrors) {
  const auto b = ufd::build_bank({rec({1, 0}, Label::kReal)}, 2);
  auto bytes = ufd::encode_bank(b);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_EQ(code_of([&] { ufd::decode_bank(bad_magic); }), ErrorCode::kBadMagic);
  auto bad_version = bytes;
  bad_version[4] = 2;
  EXPECT_EQ(code_of([&] { ufd::decode_bank(bad_version); }), ErrorCode::kFormatVersionUnsupported);
  for (std::size_t cut : {std::size_t{10}, std::size_t{30}, bytes.size() - 9}) {
    std::vector<std::uint8_t> truncated(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(cut));
    EXPECT_EQ(code_of([&] { ufd::decode_bank(truncated); }), ErrorCode::kTruncatedFile) << cut;
  }
}

TEST(MergeBanks, IdentityAndConcatenation) {
  std::mt19937_64 gen(6);
  const auto a = random_full_bank(gen, 3, 5, "progan");
  const auto b = random_full_bank(gen, 2, 5, "ldm");
  std::vector<FeatureBank> one = {a};
  EXPECT_EQ(ufd::merge_banks(one), a);
  std::vector<FeatureBank> two = {a, b};
  const auto m = ufd::merge_banks(two);
  ASSERT_EQ(m.size(), 5u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_TRUE(std::equal(m.raw(i).begin(), m.raw(i).end(), a.raw(i).begin()));
  for (std::size_t i = 0; i < 2; ++i)
    EXPECT_TRUE(std::equal(m.raw(3 + i).begin(), m.raw(3 + i).end(), b.raw(i).begin()));
  std::multiset<std::string> tags;
  for (std::size_t i = 0; i < m.size(); ++i) tags.insert(m.source_tag(i));
  EXPECT_EQ(tags, (std::multiset<std::string>{"progan", "progan", "progan", "ldm", "ldm"}));
  EXPECT_EQ(m.metadata().at("sources"), nlohmann::json({"ldm", "progan"}));
}

TEST(MergeBanks, Associative) {
  std::mt19937_64 gen(7);
  const auto a = random_full_bank(gen, 4, 3, "a"), b = random_full_bank(gen, 5, 3, "b"),
             c = random_full_bank(gen, 6, 3, "c");
  std::vector<FeatureBank> bc = {b, c}, ab = {a, b};
  std::vector<FeatureBank> left = {a, ufd::merge_banks(bc)}, right = {ufd::merge_banks(ab), c};
  EXPECT_EQ(ufd::merge_banks(left), ufd::merge_banks(right));
}

TEST(MergeBanks, RefusesMixedEncodersAndDims) {
  const auto a = ufd::build_bank({rec({1, 0}, Label::kReal)}, 2, {{"encoder_id", "clip"}, {"layer_id", "L24"}});
  const auto b = ufd::build_bank({rec({1, 0}, Label::kReal)}, 2, {{"encoder_id", "clip"}, {"layer_id", "L12"}});
  const auto c = ufd::build_bank({rec({1, 0, 0}, Label::kReal)}, 3, {{"encoder_id", "clip"}, {"layer_id", "L24"}});
  std::vector<FeatureBank> ab = {a, b}, ac = {a, c};
  EXPECT_EQ(code_of([&] { ufd::merge_banks(ab); }), ErrorCode::kEncoderMismatch);
  EXPECT_EQ(code_of([&] { ufd::merge_banks(ac); }), ErrorCode::kDimensionMismatch);
}

FeatureBank labeled_bank(std::size_t n_real, std::size_t n_fake, int classes) {
  std::vector<BankRecord> records;
  for (std::size_t i = 0; i < n_real + n_fake; ++i) {
    const float x = static_cast<float>(i + 1);
    records.push_back(rec({x, 1.0f}, i < n_real ? Label::kReal : Label::kFake,
                          classes > 0 ? static_cast<std::int32_t>(i % classes) : -1, "", std::to_string(i)));
  }
  return ufd::build_bank(std::move(records), 2);
}

TEST(Subsample, StratifiedCounts) {
  const auto b = labeled_bank(1000, 1000, 0);
  const auto s = ufd::subsample_bank(b, {ufd::SubsampleMode::kUniform, 200, 0, 11});
  EXPECT_EQ(s.count(Label::kReal), 100u);
  EXPECT_EQ(s.count(Label::kFake), 100u);
  const auto odd = ufd::subsample_bank(b, {ufd::SubsampleMode::kUniform, 201, 0, 11});
  EXPECT_EQ(odd.count(Label::kReal), 101u);
  EXPECT_EQ(odd.count(Label::kFake), 100u);
}

TEST(Subsample, FullSizeIsPermutationEqual) {
  const auto b = labeled_bank(30, 20, 0);
  const auto s = ufd::subsample_bank(b, {ufd::SubsampleMode::kUniform, 50, 0, 3});
  std::multiset<std::string> x, y;
  for (std::size_t i = 0; i < 50; ++i) {
    x.insert(b.image_ref(i));
    y.insert(s.image_ref(i));
  }
  EXPECT_EQ(x, y);
}

TEST(Subsample, DeterministicBySeed) {
  const auto b = labeled_bank(500, 500, 20);
  const ufd::SubsampleSpec spec{ufd::SubsampleMode::kUniform, 64, 0, 42};
  EXPECT_EQ(ufd::subsample_bank(b, spec), ufd::subsample_bank(b, spec));
  auto other = spec;
  other.seed = 43;
  EXPECT_FALSE(ufd::subsample_bank(b, spec) == ufd::subsample_bank(b, other));
}

TEST(Subsample, ByClassCountKeepsWholeClasses) {
  const auto b = labeled_bank(400, 400, 20);
  const auto s = ufd::subsample_bank(b, {ufd::SubsampleMode::kByClassCount, 0, 2, 7});
  std::map<std::int32_t, std::pair<int, int>> seen;
  for (std::size_t i = 0; i < s.size(); ++i)
    (s.label(i) == Label::kFake ? seen[s.class_id(i)].second : seen[s.class_id(i)].first)++;
  ASSERT_EQ(seen.size(), 2u);
  for (const auto& [id, n] : seen) {
    EXPECT_EQ(n.first, 20);
    EXPECT_EQ(n.second, 20);
  }
}

TEST(Subsample, Errors) {
  const auto b = labeled_bank(5, 5, 0);
  EXPECT_EQ(code_of([&] { ufd::subsample_bank(b, {ufd::SubsampleMode::kUniform, 11, 0, 0}); }),
            ErrorCode::kInsufficientEntries);
  EXPECT_EQ(code_of([&] { ufd::subsample_bank(b, {ufd::SubsampleMode::kByClassCount, 0, 1, 0}); }),
            ErrorCode::kMissingClassIds);
  const auto c = labeled_bank(5, 5, 3);
  EXPECT_EQ(code_of([&] { ufd::subsample_bank(c, {ufd::SubsampleMode::kByClassCount, 0, 4, 0}); }),
            ErrorCode::kInsufficientEntries);
}

}  // namespace
