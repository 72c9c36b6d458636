#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace ufd {

enum class Label : std::uint8_t { kReal = 0, kFake = 1 };

std::string_view to_string(Label label);
Label parse_label(std::string_view text);

/// One incoming record for build_bank.
struct BankRecord {
  std::vector<float> vector;
  Label label = Label::kReal;
  std::int32_t class_id = -1;
  std::string source_tag;
  std::string image_ref;
};

/// Metadata keys every bank carries.
inline constexpr std::string_view kMetaEncoderId = "encoder_id";
inline constexpr std::string_view kMetaLayerId = "layer_id";
inline constexpr std::string_view kMetaNormPrecomputed = "norm_precomputed";
inline constexpr std::string_view kMetaSources = "sources";
inline constexpr std::string_view kMetaClassIds = "class_ids";

/// Norms below this are rejected; cosine distance is undefined for them.
inline constexpr double kMinVectorNorm = 1e-12;

/// Immutable labeled embedding store.
///
/// Raw vectors and their unit-norm copies live in two contiguous row-major
/// float arrays. Copies share the underlying storage, so a bank can be passed
/// around by value and read from any number of threads.
class FeatureBank {
 public:
  FeatureBank() = default;

  std::size_t dim() const noexcept { return data_ ? data_->dim : 0; }
  std::size_t size() const noexcept { return data_ ? data_->labels.size() : 0; }
  bool empty() const noexcept { return size() == 0; }

  std::span<const float> raw(std::size_t i) const;
  std::span<const float> unit(std::size_t i) const;
  /// All unit vectors, row-major, size() x dim().
  std::span<const float> unit_matrix() const;
  std::span<const float> raw_matrix() const;

  Label label(std::size_t i) const { return data_->labels.at(i); }
  std::int32_t class_id(std::size_t i) const { return data_->class_ids.at(i); }
  const std::string& source_tag(std::size_t i) const { return data_->source_tags.at(i); }
  const std::string& image_ref(std::size_t i) const { return data_->image_refs.at(i); }
  const nlohmann::json& metadata() const;

  std::size_t count(Label label) const noexcept;
  std::string encoder_id() const;
  std::string layer_id() const;

  /// Entry i as a record (raw vector copy).
  BankRecord record(std::size_t i) const;

  friend bool operator==(const FeatureBank& a, const FeatureBank& b);

 private:
  struct Storage {
    std::size_t dim = 0;
    std::vector<float> raw;
    std::vector<float> unit;
    std::vector<Label> labels;
    std::vector<std::int32_t> class_ids;
    std::vector<std::string> source_tags;
    std::vector<std::string> image_refs;
    nlohmann::json metadata = nlohmann::json::object();
  };

  explicit FeatureBank(std::shared_ptr<const Storage> data) : data_(std::move(data)) {}

  std::shared_ptr<const Storage> data_;

  friend class BankAssembler;
};

/// Validates records and builds a bank. Entry order equals record order.
///
/// Missing encoder_id / layer_id metadata default to "unknown". The declared
/// class-id set (metadata "class_ids") is extended with every observed id,
/// unless the caller declared one, in which case entries must respect it.
/// The "sources" list becomes the sorted union of declared and observed tags.
FeatureBank build_bank(std::vector<BankRecord> records, std::size_t dim,
                       nlohmann::json metadata = nlohmann::json::object());

/// UFDB v1 serialization.
std::vector<std::uint8_t> encode_bank(const FeatureBank& bank);
FeatureBank decode_bank(std::span<const std::uint8_t> bytes);
void save_bank(const FeatureBank& bank, const std::filesystem::path& path);
FeatureBank load_bank(const std::filesystem::path& path);

/// Closed-form UFDB v1 file size for a bank.
std::size_t encoded_size(const FeatureBank& bank);

/// Concatenates banks in argument order. Refuses mixed dims and mixed
/// encoder_id/layer_id.
FeatureBank merge_banks(std::span<const FeatureBank> banks);

enum class SubsampleMode { kUniform, kByClassCount };

struct SubsampleSpec {
  SubsampleMode mode = SubsampleMode::kUniform;
  /// Uniform mode only: number of entries kept.
  std::size_t target_total = 0;
  /// By-class mode only: number of classes kept.
  std::size_t class_count = 0;
  std::uint64_t seed = 0;
};

/// Deterministic subsampling. Uniform mode keeps real:fake balanced (the
/// odd entry goes to the real side) and falls back to the other label when
/// one side runs short. Surviving entries keep their original relative order.
FeatureBank subsample_bank(const FeatureBank& bank, const SubsampleSpec& spec);

/// Entries whose indices are listed, in the listed order.
FeatureBank select_entries(const FeatureBank& bank, std::span<const std::size_t> indices);

}  // namespace ufd
