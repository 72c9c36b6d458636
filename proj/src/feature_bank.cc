#include "ufd/feature_bank.h"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <set>

#include "ufd/error.h"
#include "ufd/random.h"

namespace ufd {

static_assert(std::endian::native == std::endian::little,
              "UFDB I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'U', 'F', 'D', 'B'};
constexpr std::uint32_t kVersion = 1;
constexpr std::size_t kHeaderFixed = 4 + 4 + 4 + 8 + 4;
constexpr std::size_t kCrcSize = 4;

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed large buffers in chunks.
  constexpr std::size_t kChunk = 1u << 30;
  for (std::size_t off = 0; off < bytes.size(); off += kChunk) {
    const std::size_t n = std::min(kChunk, bytes.size() - off);
    crc = crc32(crc, bytes.data() + off, static_cast<uInt>(n));
  }
  return static_cast<std::uint32_t>(crc);
}

class Writer {
 public:
  explicit Writer(std::size_t reserve) { out_.reserve(reserve); }

  template <typename T>
  void put(T value) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
    out_.insert(out_.end(), p, p + sizeof(T));
  }

  void put_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    out_.insert(out_.end(), p, p + n);
  }

  void put_short_string(const std::string& s, const char* what) {
    check(s.size() <= std::numeric_limits<std::uint16_t>::max(), ErrorCode::kInvalidArgument,
          std::string(what) + " longer than 65535 bytes");
    put(static_cast<std::uint16_t>(s.size()));
    put_bytes(s.data(), s.size());
  }

  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    T value;
    std::memcpy(&value, take(sizeof(T)), sizeof(T));
    return value;
  }

  const std::uint8_t* take(std::size_t n) {
    check(n <= bytes_.size() - pos_, ErrorCode::kTruncatedFile,
          "unexpected end of data at byte " + std::to_string(pos_));
    const std::uint8_t* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }

  std::string get_short_string() {
    const auto n = get<std::uint16_t>();
    const auto* p = take(n);
    return std::string(reinterpret_cast<const char*>(p), n);
  }

  std::size_t position() const noexcept { return pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

void normalize_into(std::span<const float> raw, std::span<float> out) {
  double sq = 0.0;
  for (float v : raw) sq += static_cast<double>(v) * v;
  const double inv = 1.0 / std::sqrt(sq);
  for (std::size_t j = 0; j < raw.size(); ++j) out[j] = static_cast<float>(raw[j] * inv);
}

std::vector<std::string> string_list(const nlohmann::json& meta, std::string_view key) {
  std::vector<std::string> out;
  auto it = meta.find(key);
  if (it != meta.end() && it->is_array()) {
    for (const auto& v : *it)
      if (v.is_string()) out.push_back(v.get<std::string>());
  }
  return out;
}

}  // namespace

class BankAssembler {
 public:
  using Storage = FeatureBank::Storage;

  static FeatureBank wrap(Storage storage) {
    return FeatureBank(std::make_shared<const Storage>(std::move(storage)));
  }

  static const Storage& storage(const FeatureBank& bank) { return *bank.data_; }

  static void append(Storage& dst, const Storage& src, std::size_t i) {
    const std::size_t d = src.dim;
    dst.raw.insert(dst.raw.end(), src.raw.begin() + i * d, src.raw.begin() + (i + 1) * d);
    dst.unit.insert(dst.unit.end(), src.unit.begin() + i * d, src.unit.begin() + (i + 1) * d);
    dst.labels.push_back(src.labels[i]);
    dst.class_ids.push_back(src.class_ids[i]);
    dst.source_tags.push_back(src.source_tags[i]);
    dst.image_refs.push_back(src.image_refs[i]);
  }
};

std::string_view to_string(Label label) { return label == Label::kFake ? "fake" : "real"; }

Label parse_label(std::string_view text) {
  if (text == "real" || text == "0") return Label::kReal;
  if (text == "fake" || text == "1") return Label::kFake;
  raise(ErrorCode::kInvalidArgument, "label must be 'real' or 'fake', got '" + std::string(text) + "'");
}

std::span<const float> FeatureBank::raw(std::size_t i) const {
  check(data_ && i < size(), ErrorCode::kInvalidArgument, "entry index out of range");
  return std::span<const float>(data_->raw).subspan(i * data_->dim, data_->dim);
}

std::span<const float> FeatureBank::unit(std::size_t i) const {
  check(data_ && i < size(), ErrorCode::kInvalidArgument, "entry index out of range");
  return std::span<const float>(data_->unit).subspan(i * data_->dim, data_->dim);
}

std::span<const float> FeatureBank::unit_matrix() const {
  return data_ ? std::span<const float>(data_->unit) : std::span<const float>();
}

std::span<const float> FeatureBank::raw_matrix() const {
  return data_ ? std::span<const float>(data_->raw) : std::span<const float>();
}

const nlohmann::json& FeatureBank::metadata() const {
  static const nlohmann::json kEmpty = nlohmann::json::object();
  return data_ ? data_->metadata : kEmpty;
}

std::size_t FeatureBank::count(Label label) const noexcept {
  if (!data_) return 0;
  return static_cast<std::size_t>(std::count(data_->labels.begin(), data_->labels.end(), label));
}

std::string FeatureBank::encoder_id() const {
  return metadata().value(std::string(kMetaEncoderId), std::string("unknown"));
}

std::string FeatureBank::layer_id() const {
  return metadata().value(std::string(kMetaLayerId), std::string("unknown"));
}

BankRecord FeatureBank::record(std::size_t i) const {
  const auto v = raw(i);
  return BankRecord{std::vector<float>(v.begin(), v.end()), label(i), class_id(i), source_tag(i),
                    image_ref(i)};
}

bool operator==(const FeatureBank& a, const FeatureBank& b) {
  if (a.data_ == b.data_) return true;
  if (!a.data_ || !b.data_) return a.size() == 0 && b.size() == 0 && a.metadata() == b.metadata();
  const auto& x = *a.data_;
  const auto& y = *b.data_;
  auto bits_equal = [](const std::vector<float>& p, const std::vector<float>& q) {
    return p.size() == q.size() &&
           (p.empty() || std::memcmp(p.data(), q.data(), p.size() * sizeof(float)) == 0);
  };
  return x.dim == y.dim && x.labels == y.labels && x.class_ids == y.class_ids &&
         x.source_tags == y.source_tags && x.image_refs == y.image_refs &&
         bits_equal(x.raw, y.raw) && bits_equal(x.unit, y.unit) && x.metadata == y.metadata;
}

FeatureBank build_bank(std::vector<BankRecord> records, std::size_t dim, nlohmann::json metadata) {
  check(dim > 0, ErrorCode::kInvalidArgument, "dimension must be positive");
  check(!records.empty(), ErrorCode::kEmptyInput, "no records supplied");
  if (metadata.is_null()) metadata = nlohmann::json::object();
  check(metadata.is_object(), ErrorCode::kInvalidArgument, "metadata must be a JSON object");

  const bool declared_classes = metadata.contains(kMetaClassIds);
  std::set<std::int32_t> class_set;
  if (declared_classes) {
    for (const auto& v : metadata.at(std::string(kMetaClassIds))) class_set.insert(v.get<std::int32_t>());
  }

  BankAssembler::Storage s;
  s.dim = dim;
  s.raw.reserve(records.size() * dim);
  s.unit.resize(records.size() * dim);
  s.labels.reserve(records.size());
  s.class_ids.reserve(records.size());
  s.source_tags.reserve(records.size());
  s.image_refs.reserve(records.size());

  std::set<std::string> sources;
  for (auto& tag : string_list(metadata, kMetaSources)) sources.insert(std::move(tag));

  for (std::size_t i = 0; i < records.size(); ++i) {
    auto& rec = records[i];
    const std::string where = "record " + std::to_string(i);
    check(rec.vector.size() == dim, ErrorCode::kDimensionMismatch,
          where + " has length " + std::to_string(rec.vector.size()) + ", expected " +
              std::to_string(dim));
    double sq = 0.0;
    for (float v : rec.vector) {
      check(std::isfinite(v), ErrorCode::kNonFiniteValue, where + " contains a non-finite value");
      sq += static_cast<double>(v) * v;
    }
    check(std::sqrt(sq) >= kMinVectorNorm, ErrorCode::kZeroNormVector, where + " has zero norm");
    check(rec.label == Label::kReal || rec.label == Label::kFake, ErrorCode::kInvalidArgument,
          where + " has an invalid label");
    check(rec.class_id >= -1, ErrorCode::kInvalidArgument, where + " has class_id below -1");
    if (rec.class_id >= 0) {
      if (declared_classes) {
        check(class_set.contains(rec.class_id), ErrorCode::kUnknownClassId,
              where + " uses undeclared class_id " + std::to_string(rec.class_id));
      } else {
        class_set.insert(rec.class_id);
      }
    }

    s.raw.insert(s.raw.end(), rec.vector.begin(), rec.vector.end());
    normalize_into(rec.vector, std::span<float>(s.unit).subspan(i * dim, dim));
    s.labels.push_back(rec.label);
    s.class_ids.push_back(rec.class_id);
    if (!rec.source_tag.empty()) sources.insert(rec.source_tag);
    s.source_tags.push_back(std::move(rec.source_tag));
    s.image_refs.push_back(std::move(rec.image_ref));
  }

  if (!metadata.contains(kMetaEncoderId)) metadata[std::string(kMetaEncoderId)] = "unknown";
  if (!metadata.contains(kMetaLayerId)) metadata[std::string(kMetaLayerId)] = "unknown";
  metadata[std::string(kMetaNormPrecomputed)] = true;
  metadata[std::string(kMetaSources)] = std::vector<std::string>(sources.begin(), sources.end());
  metadata[std::string(kMetaClassIds)] = std::vector<std::int32_t>(class_set.begin(), class_set.end());
  s.metadata = std::move(metadata);
  return BankAssembler::wrap(std::move(s));
}

std::size_t encoded_size(const FeatureBank& bank) {
  std::size_t total = kHeaderFixed + bank.metadata().dump().size() + kCrcSize;
  for (std::size_t i = 0; i < bank.size(); ++i) {
    total += 1 + 4 + 2 + bank.source_tag(i).size() + 2 + bank.image_ref(i).size() +
             2 * bank.dim() * sizeof(float);
  }
  return total;
}

std::vector<std::uint8_t> encode_bank(const FeatureBank& bank) {
  const std::string meta = bank.metadata().dump();
  check(meta.size() <= std::numeric_limits<std::uint32_t>::max(), ErrorCode::kInvalidArgument,
        "metadata too large");
  check(bank.dim() <= std::numeric_limits<std::uint32_t>::max(), ErrorCode::kInvalidArgument,
        "dimension too large");
  Writer w(encoded_size(bank));
  w.put_bytes(kMagic, sizeof(kMagic));
  w.put(kVersion);
  w.put(static_cast<std::uint32_t>(bank.dim()));
  w.put(static_cast<std::uint64_t>(bank.size()));
  w.put(static_cast<std::uint32_t>(meta.size()));
  w.put_bytes(meta.data(), meta.size());
  for (std::size_t i = 0; i < bank.size(); ++i) {
    w.put(static_cast<std::uint8_t>(bank.label(i)));
    w.put(bank.class_id(i));
    w.put_short_string(bank.source_tag(i), "source_tag");
    w.put_short_string(bank.image_ref(i), "image_ref");
    w.put_bytes(bank.raw(i).data(), bank.dim() * sizeof(float));
    w.put_bytes(bank.unit(i).data(), bank.dim() * sizeof(float));
  }
  auto bytes = w.take();
  const std::uint32_t crc = crc32_of(bytes);
  const auto* p = reinterpret_cast<const std::uint8_t*>(&crc);
  bytes.insert(bytes.end(), p, p + sizeof(crc));
  return bytes;
}

FeatureBank decode_bank(std::span<const std::uint8_t> bytes) {
  check(bytes.size() >= sizeof(kMagic), ErrorCode::kTruncatedFile, "file shorter than magic");
  check(std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) == 0, ErrorCode::kBadMagic,
        "not a UFDB file");
  Reader r(bytes);
  r.take(sizeof(kMagic));
  const auto version = r.get<std::uint32_t>();
  check(version == kVersion, ErrorCode::kFormatVersionUnsupported,
        "UFDB version " + std::to_string(version) + " is not supported");
  const auto dim = r.get<std::uint32_t>();
  const auto count = r.get<std::uint64_t>();
  const auto meta_len = r.get<std::uint32_t>();
  const auto* meta_ptr = r.take(meta_len);
  check(dim > 0, ErrorCode::kCorruptData, "zero dimension");

  // Each entry needs at least this many bytes; reject absurd counts before
  // reserving memory for them.
  const std::size_t min_entry = 1 + 4 + 2 + 2 + 2 * std::size_t{dim} * sizeof(float);
  check(count <= (bytes.size() - r.position()) / min_entry, ErrorCode::kTruncatedFile,
        "entry count exceeds file size");

  BankAssembler::Storage s;
  s.dim = dim;
  s.raw.resize(count * dim);
  s.unit.resize(count * dim);
  s.labels.reserve(count);
  s.class_ids.reserve(count);
  s.source_tags.reserve(count);
  s.image_refs.reserve(count);
  std::vector<std::uint8_t> raw_labels;
  raw_labels.reserve(count);
  const std::size_t row_bytes = std::size_t{dim} * sizeof(float);
  for (std::uint64_t i = 0; i < count; ++i) {
    raw_labels.push_back(r.get<std::uint8_t>());
    s.class_ids.push_back(r.get<std::int32_t>());
    s.source_tags.push_back(r.get_short_string());
    s.image_refs.push_back(r.get_short_string());
    std::memcpy(s.raw.data() + i * dim, r.take(row_bytes), row_bytes);
    std::memcpy(s.unit.data() + i * dim, r.take(row_bytes), row_bytes);
  }
  const std::size_t body = r.position();
  const auto stored_crc = r.get<std::uint32_t>();
  check(r.position() == bytes.size(), ErrorCode::kChecksumMismatch, "trailing bytes after checksum");
  check(crc32_of(bytes.first(body)) == stored_crc, ErrorCode::kChecksumMismatch,
        "CRC32 does not match file contents");

  for (auto b : raw_labels) {
    check(b <= 1, ErrorCode::kCorruptData, "label byte out of range");
    s.labels.push_back(static_cast<Label>(b));
  }
  try {
    s.metadata = nlohmann::json::parse(meta_ptr, meta_ptr + meta_len);
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorCode::kCorruptData, std::string("metadata is not valid JSON: ") + e.what());
  }
  return BankAssembler::wrap(std::move(s));
}

void save_bank(const FeatureBank& bank, const std::filesystem::path& path) {
  const auto bytes = encode_bank(bank);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  check(static_cast<bool>(out), ErrorCode::kIoFailure, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  check(static_cast<bool>(out), ErrorCode::kIoFailure, "write failed for " + path.string());
}

FeatureBank load_bank(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  check(static_cast<bool>(in), ErrorCode::kIoFailure, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_bank(bytes);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

FeatureBank merge_banks(std::span<const FeatureBank> banks) {
  check(!banks.empty(), ErrorCode::kEmptyInput, "nothing to merge");
  const auto& first = banks.front();
  BankAssembler::Storage s;
  s.dim = first.dim();
  s.metadata = first.metadata();
  std::set<std::string> sources;
  std::set<std::int32_t> classes;
  for (std::size_t b = 0; b < banks.size(); ++b) {
    const auto& bank = banks[b];
    check(!bank.empty(), ErrorCode::kEmptyInput, "bank " + std::to_string(b) + " is empty");
    check(bank.dim() == s.dim, ErrorCode::kDimensionMismatch,
          "bank " + std::to_string(b) + " has dim " + std::to_string(bank.dim()) + ", expected " +
              std::to_string(s.dim));
    check(bank.encoder_id() == first.encoder_id() && bank.layer_id() == first.layer_id(),
          ErrorCode::kEncoderMismatch,
          "bank " + std::to_string(b) + " was produced by " + bank.encoder_id() + "/" +
              bank.layer_id() + ", expected " + first.encoder_id() + "/" + first.layer_id());
    for (auto& tag : string_list(bank.metadata(), kMetaSources)) sources.insert(std::move(tag));
    if (auto it = bank.metadata().find(kMetaClassIds); it != bank.metadata().end()) {
      for (const auto& v : *it) classes.insert(v.get<std::int32_t>());
    }
    const auto& src = BankAssembler::storage(bank);
    for (std::size_t i = 0; i < bank.size(); ++i) BankAssembler::append(s, src, i);
  }
  s.metadata[std::string(kMetaSources)] = std::vector<std::string>(sources.begin(), sources.end());
  s.metadata[std::string(kMetaClassIds)] = std::vector<std::int32_t>(classes.begin(), classes.end());
  return BankAssembler::wrap(std::move(s));
}

FeatureBank select_entries(const FeatureBank& bank, std::span<const std::size_t> indices) {
  check(!indices.empty(), ErrorCode::kEmptyInput, "selection is empty");
  const auto& src = BankAssembler::storage(bank);
  BankAssembler::Storage s;
  s.dim = src.dim;
  s.metadata = src.metadata;
  for (auto i : indices) {
    check(i < bank.size(), ErrorCode::kInvalidArgument, "selection index out of range");
    BankAssembler::append(s, src, i);
  }
  return BankAssembler::wrap(std::move(s));
}

FeatureBank subsample_bank(const FeatureBank& bank, const SubsampleSpec& spec) {
  check(!bank.empty(), ErrorCode::kEmptyInput, "cannot subsample an empty bank");
  Rng rng(spec.seed);
  std::vector<std::size_t> keep;

  if (spec.mode == SubsampleMode::kUniform) {
    check(spec.target_total > 0, ErrorCode::kInvalidArgument, "target_total must be positive");
    check(spec.target_total <= bank.size(), ErrorCode::kInsufficientEntries,
          "requested " + std::to_string(spec.target_total) + " entries from a bank of " +
              std::to_string(bank.size()));
    std::vector<std::size_t> reals, fakes;
    for (std::size_t i = 0; i < bank.size(); ++i)
      (bank.label(i) == Label::kFake ? fakes : reals).push_back(i);
    rng.shuffle(reals);
    rng.shuffle(fakes);
    std::size_t n_fake = spec.target_total / 2;
    std::size_t n_real = spec.target_total - n_fake;
    if (n_real > reals.size()) {
      n_fake += n_real - reals.size();
      n_real = reals.size();
    }
    if (n_fake > fakes.size()) {
      n_real += n_fake - fakes.size();
      n_fake = fakes.size();
    }
    keep.assign(reals.begin(), reals.begin() + static_cast<std::ptrdiff_t>(n_real));
    keep.insert(keep.end(), fakes.begin(), fakes.begin() + static_cast<std::ptrdiff_t>(n_fake));
  } else {
    std::set<std::int32_t> distinct;
    for (std::size_t i = 0; i < bank.size(); ++i) {
      check(bank.class_id(i) >= 0, ErrorCode::kMissingClassIds,
            "entry " + std::to_string(i) + " has no class id");
      distinct.insert(bank.class_id(i));
    }
    check(spec.class_count > 0, ErrorCode::kInvalidArgument, "class_count must be positive");
    check(spec.class_count <= distinct.size(), ErrorCode::kInsufficientEntries,
          "requested " + std::to_string(spec.class_count) + " classes, bank has " +
              std::to_string(distinct.size()));
    std::vector<std::int32_t> ids(distinct.begin(), distinct.end());
    rng.shuffle(ids);
    const std::set<std::int32_t> chosen(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(spec.class_count));
    for (std::size_t i = 0; i < bank.size(); ++i)
      if (chosen.contains(bank.class_id(i))) keep.push_back(i);
  }

  std::sort(keep.begin(), keep.end());
  return select_entries(bank, keep);
}

}  // namespace ufd
