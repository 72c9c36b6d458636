#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "ufd/augment.h"

namespace ufd {

/// Row-major grid of doubles.
struct Grid {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  Grid() = default;
  Grid(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), values(r * c, fill) {}

  double& at(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

/// Averaged Fourier magnitude of a corpus of high-pass residuals.
struct SpectrumImage {
  Grid magnitude;
  bool dc_centered = true;
  bool log_scaled = false;
  std::size_t n_images = 0;
  nlohmann::json parameters = nlohmann::json::object();

  std::size_t size() const noexcept { return magnitude.rows; }
};

/// Rec.601 luma of an RGB image, as doubles in [0, 255].
Grid luminance(const RasterImage& image);

/// Square-window median filter with clamp-to-edge borders. `kernel` is odd.
Grid median_blur(const Grid& grid, int kernel);

/// Luminance minus its median-blurred copy.
Grid highpass(const RasterImage& image, int median_kernel = 3);

/// |DFT| with orthonormal scaling, so total energy equals spatial energy.
/// The zero-frequency bin is at (0, 0).
Grid fourier_magnitude(const Grid& grid);

/// Moves the zero-frequency bin to (rows/2, cols/2).
Grid center_dc(const Grid& grid);
/// Inverse of center_dc.
Grid uncenter_dc(const Grid& grid);

struct SpectrumOptions {
  int median_kernel = 3;
  std::size_t size = 256;
  bool log_scale = false;
  /// Skip the high-pass step and transform the mean luminance directly.
  bool bypass_highpass = false;
};

/// Resizes every image to size x size (when needed), high-passes it, averages
/// the residuals pixelwise and transforms the average. DC-centered.
SpectrumImage average_spectrum(std::span<const RasterImage> images, const SpectrumOptions& options);

/// 8-bit grayscale PNG, min-max normalized. A flat grid renders black.
void render_spectrum(const SpectrumImage& spectrum, const std::filesystem::path& path);

/// Raw grid file: "UFSP", u32 version, u32 rows, u32 cols, u64 n_images,
/// u8 dc_centered, u8 log_scaled, rows*cols little-endian f32.
void save_spectrum_grid(const SpectrumImage& spectrum, const std::filesystem::path& path);
SpectrumImage load_spectrum_grid(const std::filesystem::path& path);

}  // namespace ufd
