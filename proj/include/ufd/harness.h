#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "ufd/augment.h"
#include "ufd/feature_bank.h"
#include "ufd/linear_probe.h"
#include "ufd/metrics.h"

namespace ufd {

// Test-set manifests ---------------------------------------------------------

/// Column groups of the generalization tables.
enum class ModelFamily { kGan, kDeepfake, kLowLevelVision, kPerceptualLoss, kDiffusion, kAutoregressive };

std::string_view to_string(ModelFamily family);
ModelFamily parse_family(std::string_view text);

struct TestSetManifest {
  std::string name;
  ModelFamily family = ModelFamily::kGan;
  std::filesystem::path real_bank;
  std::filesystem::path fake_bank;
  std::filesystem::path real_images;
  std::filesystem::path fake_images;
  /// Precomputed scores (JSON-lines) for method-agnostic evaluation.
  std::filesystem::path scores;
  nlohmann::json notes = nlohmann::json::object();
};

struct Suite {
  std::string name;
  std::vector<TestSetManifest> sets;
};

/// Parses a suite manifest. Relative paths resolve against the manifest's
/// directory. Names must be unique.
///
///   {"name": "...", "test_sets": [{"name": "CycleGAN", "family": "gan",
///     "real_bank": "r.ufdb", "fake_bank": "f.ufdb", "real_images": "dir",
///     "fake_images": "dir", "scores": "s.jsonl", "notes": {}}]}
Suite parse_suite(const nlohmann::json& j, const std::filesystem::path& base_dir);
Suite load_suite(const std::filesystem::path& path);
nlohmann::json suite_to_manifest_json(const Suite& suite);

enum class SetInput { kBanks, kImages, kScores };

/// Throws ManifestUnresolvable naming the first set whose inputs are missing.
void require_resolvable(const Suite& suite, SetInput input);

// Scores files ---------------------------------------------------------------

struct ScoreRecord {
  double score = 0.0;
  std::optional<Label> truth;
  std::string image_ref;
  std::optional<Label> decision;
};

/// One JSON object per line: {"score", "truth", "image_ref", "decision"}.
/// Scores are written with round-trip precision.
std::string scores_to_jsonl(std::span<const ScoreRecord> records);
std::vector<ScoreRecord> scores_from_jsonl(std::string_view text);
void write_scores(const std::filesystem::path& path, std::span<const ScoreRecord> records);
std::vector<ScoreRecord> read_scores(const std::filesystem::path& path);

/// Requires every record to carry ground truth.
std::vector<LabeledScore> labeled_scores(std::span<const ScoreRecord> records);

// Methods --------------------------------------------------------------------

/// Turns a query bank into per-entry scores (higher = more fake).
class Scorer {
 public:
  virtual ~Scorer() = default;
  virtual std::vector<ScoreRecord> score(const FeatureBank& queries, std::size_t threads) const = 0;
  /// Threshold used by fixed calibration when none is given.
  virtual double default_threshold() const = 0;
  virtual nlohmann::json describe() const = 0;
};

class KnnScorer final : public Scorer {
 public:
  KnnScorer(FeatureBank bank, std::size_t k) : bank_(std::move(bank)), k_(k) {}
  std::vector<ScoreRecord> score(const FeatureBank& queries, std::size_t threads) const override;
  double default_threshold() const override { return 0.0; }
  nlohmann::json describe() const override;
  const FeatureBank& bank() const { return bank_; }

 private:
  FeatureBank bank_;
  std::size_t k_;
};

class LinearScorer final : public Scorer {
 public:
  explicit LinearScorer(LinearModel model) : model_(std::move(model)) {}
  std::vector<ScoreRecord> score(const FeatureBank& queries, std::size_t threads) const override;
  double default_threshold() const override { return 0.5; }
  nlohmann::json describe() const override;

 private:
  LinearModel model_;
};

/// Loads and merges a set's real and fake banks into one query bank.
FeatureBank load_set_queries(const TestSetManifest& set);

// Suite evaluation -----------------------------------------------------------

struct CalibrationSpec {
  ThresholdSource source = ThresholdSource::kFixed;
  /// Used when source is fixed; defaults to the scorer's threshold.
  std::optional<double> fixed_threshold;
  /// Held-out labeled bank of the training source, for validation calibration.
  std::optional<FeatureBank> validation_bank;
  /// Or precomputed validation scores.
  std::optional<std::vector<LabeledScore>> validation_scores;
};

struct FamilyRollup {
  std::string family;
  double mean_ap = 0.0;
  double mean_accuracy = 0.0;
  std::size_t members = 0;
};

struct SuiteResult {
  std::string suite_name;
  std::vector<NamedReport> per_set;
  double map_total = 0.0;
  double avg_acc_total = 0.0;
  std::vector<FamilyRollup> family_rollups;
  nlohmann::json provenance = nlohmann::json::object();
};

/// Per-family means (family order of first appearance) and suite totals.
SuiteResult assemble_suite_result(std::string suite_name, std::vector<NamedReport> per_set,
                                  const std::map<std::string, std::string>& family_of,
                                  nlohmann::json provenance);

struct SuiteRunOptions {
  std::size_t threads = 1;
  ApConvention ap_convention = ApConvention::kStep;
  /// Stamped into provenance verbatim.
  std::string timestamp;
  nlohmann::json config_echo = nlohmann::json::object();
};

/// Scores and evaluates every set. With a null scorer each set must provide a
/// scores file. Sets run concurrently; results keep manifest order.
SuiteResult evaluate_suite(const Suite& suite, const Scorer* scorer, const CalibrationSpec& calibration,
                           const SuiteRunOptions& options = {});

/// Stable JSON with every float rounded to 6 significant digits.
nlohmann::json suite_result_to_json(const SuiteResult& result);

/// Round to `digits` significant digits.
double round_significant(double value, int digits);

// Report tables ----------------------------------------------------------------

enum class TableMetric { kAp, kAccuracy, kRealAccuracy, kFakeAccuracy };

std::string_view to_string(TableMetric metric);

struct ResultTable {
  TableMetric metric = TableMetric::kAp;
  std::vector<std::string> columns;
  /// Row label and per-column values in percent, plus the trailing mean.
  struct Row {
    std::string label;
    std::vector<double> values;
    double mean = 0.0;
  };
  std::vector<Row> rows;
};

/// Adds one row (label) to the table built from a suite result. Columns come
/// from the first row added.
void add_table_row(ResultTable& table, const std::string& label, const SuiteResult& result);

/// Two decimals, percent units; trailing "mAP" or "Avg. acc" column.
std::string render_table_csv(const ResultTable& table);
std::string render_table_text(const ResultTable& table);

// Image embedders for robustness sweeps ----------------------------------------

class ImageEmbedder {
 public:
  virtual ~ImageEmbedder() = default;
  virtual FeatureBank embed(std::span<const RasterImage> images, std::span<const Label> labels,
                            std::span<const std::string> image_refs) const = 0;
};

/// Downsampled-pixel features: each image resized to side x side, RGB values
/// mapped to (v + 1) / 256. A pixel-space stand-in for a real encoder, used
/// for self-contained runs and tests.
class PixelEmbedder final : public ImageEmbedder {
 public:
  explicit PixelEmbedder(int side = 16) : side_(side) {}
  FeatureBank embed(std::span<const RasterImage> images, std::span<const Label> labels,
                    std::span<const std::string> image_refs) const override;
  std::string encoder_id() const;

 private:
  int side_;
};

/// Delegates to an external extraction command, run once per label with the
/// placeholders {images}, {out} and {label} substituted. The command must
/// write a UFDB file to {out}.
class CommandEmbedder final : public ImageEmbedder {
 public:
  explicit CommandEmbedder(std::string command_template) : template_(std::move(command_template)) {}
  FeatureBank embed(std::span<const RasterImage> images, std::span<const Label> labels,
                    std::span<const std::string> image_refs) const override;

 private:
  std::string template_;
};

struct RobustnessResult {
  std::vector<SweepRow> rows;
  std::vector<FamilySweepRow> family_rows;
};

/// Perturbs each set's images per grid level, re-embeds, re-scores and
/// computes AP. Requires real_images and fake_images on every set.
RobustnessResult run_robustness(const Suite& suite, const Scorer& scorer, const ImageEmbedder& embedder,
                                std::span<const double> blur_grid, std::span<const int> jpeg_grid);

}  // namespace ufd
