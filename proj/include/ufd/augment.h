#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ufd/metrics.h"

namespace ufd {

/// 8-bit interleaved RGB image, row-major.
struct RasterImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  static constexpr int kChannels = 3;

  RasterImage() = default;
  RasterImage(int w, int h, std::uint8_t fill = 0);

  std::uint8_t& at(int x, int y, int c) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * kChannels + c];
  }
  std::uint8_t at(int x, int y, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * kChannels + c];
  }

  /// Throws InvalidArgument unless dimensions and buffer length agree.
  void validate() const;

  friend bool operator==(const RasterImage&, const RasterImage&) = default;
};

RasterImage read_image(const std::filesystem::path& path);
void write_png(const RasterImage& image, const std::filesystem::path& path);
void write_jpeg(const RasterImage& image, const std::filesystem::path& path, int quality);
/// Sorted list of image files (png/jpg/jpeg/bmp/webp) directly inside `dir`.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);

/// Separable Gaussian blur, radius ceil(3 sigma), clamp-to-edge, per channel.
/// sigma == 0 returns the input unchanged.
RasterImage gaussian_blur(const RasterImage& image, double sigma);

/// Normalized 1-D Gaussian taps for `sigma`, length 2*ceil(3 sigma)+1.
std::vector<double> gaussian_kernel(double sigma);

/// Baseline JPEG encode/decode round trip at `quality` (1..100).
RasterImage jpeg_compress(const RasterImage& image, int quality);

struct AugmentPolicy {
  /// Chance that blur is applied, and independently that JPEG is applied.
  double probability = 0.5;
  double sigma_lo = 0.0;
  double sigma_hi = 3.0;
  int quality_lo = 30;
  int quality_hi = 100;
  std::uint64_t seed = 0;
  bool blur_first = true;

  void validate() const;
};

void to_json(nlohmann::json& j, const AugmentPolicy& p);
void from_json(const nlohmann::json& j, AugmentPolicy& p);

/// What apply_policy decided for one draw.
struct AugmentDraw {
  bool blur = false;
  double sigma = 0.0;
  bool jpeg = false;
  int quality = 100;
};

/// Pure function of (policy.seed, draw_id).
AugmentDraw draw_augmentation(const AugmentPolicy& policy, std::uint64_t draw_id);

RasterImage apply_policy(const RasterImage& image, const AugmentPolicy& policy,
                         std::uint64_t draw_id);

// Robustness sweeps ----------------------------------------------------------

enum class PerturbationAxis { kNone, kBlur, kJpeg };

std::string_view to_string(PerturbationAxis axis);

struct Perturbation {
  PerturbationAxis axis = PerturbationAxis::kNone;
  /// Sigma for blur, quality for JPEG.
  double level = 0.0;

  RasterImage operator()(const RasterImage& image) const;
};

inline const std::vector<double> kDefaultBlurGrid = {0, 0.5, 1, 1.5, 2, 3};
inline const std::vector<int> kDefaultJpegGrid = {100, 90, 80, 70, 60, 50, 40, 30};

/// Produces labeled scores for one test set with every image passed through
/// the perturbation before feature extraction.
using PerturbedScoreFn =
    std::function<std::vector<LabeledScore>(const std::string& test_set, const Perturbation&)>;

struct SweepRow {
  PerturbationAxis axis = PerturbationAxis::kNone;
  double level = 0.0;
  std::string test_set;
  double ap = 0.0;
};

std::vector<SweepRow> robustness_sweep(std::span<const std::string> test_sets,
                                       const PerturbedScoreFn& score_fn,
                                       std::span<const double> blur_grid,
                                       std::span<const int> jpeg_grid);

struct FamilySweepRow {
  PerturbationAxis axis = PerturbationAxis::kNone;
  double level = 0.0;
  std::string family;
  double mean_ap = 0.0;
  std::size_t members = 0;
};

/// Arithmetic mean of member APs per (axis, level, family). Sets missing
/// from `family_of` are grouped under "other".
std::vector<FamilySweepRow> group_sweep_by_family(std::span<const SweepRow> rows,
                                                  const std::map<std::string, std::string>& family_of);

std::string sweep_to_csv(std::span<const SweepRow> rows,
                         const std::map<std::string, std::string>& family_of);
std::string family_sweep_to_csv(std::span<const FamilySweepRow> rows);

}  // namespace ufd
