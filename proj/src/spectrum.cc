#include "ufd/spectrum.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <thread>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "ufd/error.h"

namespace ufd {
namespace {

constexpr char kGridMagic[4] = {'U', 'F', 'S', 'P'};
constexpr std::uint32_t kGridVersion = 1;

RasterImage resized(const RasterImage& image, std::size_t size) {
  if (static_cast<std::size_t>(image.width) == size && static_cast<std::size_t>(image.height) == size)
    return image;
  image.validate();
  cv::Mat src(image.height, image.width, CV_8UC3, const_cast<std::uint8_t*>(image.pixels.data()));
  cv::Mat dst;
  const int s = static_cast<int>(size);
  const bool shrinking = image.width > s || image.height > s;
  cv::resize(src, dst, cv::Size(s, s), 0, 0, shrinking ? cv::INTER_AREA : cv::INTER_LINEAR);
  RasterImage out(s, s);
  for (int y = 0; y < s; ++y)
    std::copy_n(dst.ptr<std::uint8_t>(y), static_cast<std::size_t>(s) * 3,
                out.pixels.begin() + static_cast<std::ptrdiff_t>(y) * s * 3);
  return out;
}

void add_into(Grid& acc, const Grid& g) {
  for (std::size_t i = 0; i < acc.values.size(); ++i) acc.values[i] += g.values[i];
}

/// Pairwise summation of a stream of grids using O(log n) partial sums.
class PairwiseSum {
 public:
  void push(Grid g) {
    std::size_t level = 0;
    while (!stack_.empty() && stack_.back().second == level) {
      Grid left = std::move(stack_.back().first);
      stack_.pop_back();
      add_into(left, g);
      g = std::move(left);
      ++level;
    }
    stack_.emplace_back(std::move(g), level);
  }

  Grid total() && {
    Grid acc = std::move(stack_.back().first);
    for (std::size_t i = stack_.size() - 1; i-- > 0;) {
      Grid left = std::move(stack_[i].first);
      add_into(left, acc);
      acc = std::move(left);
    }
    return acc;
  }

 private:
  std::vector<std::pair<Grid, std::size_t>> stack_;
};

Grid shift(const Grid& g, std::size_t dr, std::size_t dc) {
  Grid out(g.rows, g.cols);
  for (std::size_t r = 0; r < g.rows; ++r)
    for (std::size_t c = 0; c < g.cols; ++c)
      out.at((r + dr) % g.rows, (c + dc) % g.cols) = g.at(r, c);
  return out;
}

}  // namespace

Grid luminance(const RasterImage& image) {
  image.validate();
  Grid g(static_cast<std::size_t>(image.height), static_cast<std::size_t>(image.width));
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x)
      g.at(y, x) = 0.299 * image.at(x, y, 0) + 0.587 * image.at(x, y, 1) + 0.114 * image.at(x, y, 2);
  return g;
}

Grid median_blur(const Grid& grid, int kernel) {
  check(kernel >= 3 && kernel % 2 == 1, ErrorCode::kInvalidArgument,
        "median kernel must be odd and >= 3, got " + std::to_string(kernel));
  check(static_cast<std::size_t>(kernel) <= std::min(grid.rows, grid.cols), ErrorCode::kKernelTooLarge,
        "median kernel " + std::to_string(kernel) + " exceeds image size");
  const long r = kernel / 2;
  const long rows = static_cast<long>(grid.rows), cols = static_cast<long>(grid.cols);
  Grid out(grid.rows, grid.cols);
  std::vector<double> window(static_cast<std::size_t>(kernel) * kernel);
  const auto mid = window.begin() + static_cast<std::ptrdiff_t>(window.size() / 2);
  for (long y = 0; y < rows; ++y)
    for (long x = 0; x < cols; ++x) {
      std::size_t n = 0;
      for (long dy = -r; dy <= r; ++dy)
        for (long dx = -r; dx <= r; ++dx)
          window[n++] = grid.at(static_cast<std::size_t>(std::clamp(y + dy, 0L, rows - 1)),
                                static_cast<std::size_t>(std::clamp(x + dx, 0L, cols - 1)));
      std::nth_element(window.begin(), mid, window.end());
      out.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = *mid;
    }
  return out;
}

Grid highpass(const RasterImage& image, int median_kernel) {
  Grid lum = luminance(image);
  const Grid med = median_blur(lum, median_kernel);
  for (std::size_t i = 0; i < lum.values.size(); ++i) lum.values[i] -= med.values[i];
  return lum;
}

Grid fourier_magnitude(const Grid& grid) {
  check(grid.rows > 0 && grid.cols > 0, ErrorCode::kInvalidArgument, "empty grid");
  cv::Mat src(static_cast<int>(grid.rows), static_cast<int>(grid.cols), CV_64F,
              const_cast<double*>(grid.values.data()));
  cv::Mat freq;
  cv::dft(src, freq, cv::DFT_COMPLEX_OUTPUT);
  const double scale = 1.0 / std::sqrt(static_cast<double>(grid.rows * grid.cols));
  Grid out(grid.rows, grid.cols);
  for (int r = 0; r < freq.rows; ++r) {
    const auto* row = freq.ptr<cv::Vec2d>(r);
    for (int c = 0; c < freq.cols; ++c)
      out.at(r, c) = std::hypot(row[c][0], row[c][1]) * scale;
  }
  return out;
}

Grid center_dc(const Grid& grid) { return shift(grid, grid.rows / 2, grid.cols / 2); }

Grid uncenter_dc(const Grid& grid) {
  return shift(grid, grid.rows - grid.rows / 2, grid.cols - grid.cols / 2);
}

SpectrumImage average_spectrum(std::span<const RasterImage> images, const SpectrumOptions& options) {
  check(!images.empty(), ErrorCode::kEmptyCorpus, "no images to average");
  check(options.size > 0, ErrorCode::kInvalidArgument, "spectrum size must be positive");
  if (!options.bypass_highpass)
    check(options.median_kernel >= 3 && options.median_kernel % 2 == 1, ErrorCode::kInvalidArgument,
          "median kernel must be odd and >= 3");

  auto residual = [&](const RasterImage& img) {
    const RasterImage sized = resized(img, options.size);
    return options.bypass_highpass ? luminance(sized) : highpass(sized, options.median_kernel);
  };

  // Residuals are computed a block at a time in parallel, then folded into
  // the pairwise sum in corpus order.
  const std::size_t block = std::max(1u, std::thread::hardware_concurrency());
  PairwiseSum sum;
  std::vector<Grid> pending(block);
  for (std::size_t start = 0; start < images.size(); start += block) {
    const std::size_t n = std::min(block, images.size() - start);
    if (n == 1) {
      pending[0] = residual(images[start]);
    } else {
      std::vector<std::exception_ptr> errors(n);
      {
        std::vector<std::jthread> pool;
        for (std::size_t i = 0; i < n; ++i)
          pool.emplace_back([&, i] {
            try {
              pending[i] = residual(images[start + i]);
            } catch (...) {
              errors[i] = std::current_exception();
            }
          });
      }
      for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    }
    for (std::size_t i = 0; i < n; ++i) sum.push(std::move(pending[i]));
  }
  Grid mean = std::move(sum).total();
  for (auto& v : mean.values) v /= static_cast<double>(images.size());

  SpectrumImage out;
  out.magnitude = center_dc(fourier_magnitude(mean));
  out.dc_centered = true;
  out.log_scaled = options.log_scale;
  if (options.log_scale)
    for (auto& v : out.magnitude.values) v = std::log1p(v);
  out.n_images = images.size();
  out.parameters = {{"median_kernel", options.median_kernel},
                    {"size", options.size},
                    {"log_scale", options.log_scale},
                    {"bypass_highpass", options.bypass_highpass},
                    {"color", "rec601_luma"},
                    {"dft_scaling", "orthonormal"},
                    {"n_images", images.size()}};
  return out;
}

void render_spectrum(const SpectrumImage& spectrum, const std::filesystem::path& path) {
  const auto& g = spectrum.magnitude;
  check(g.rows > 0 && g.cols > 0, ErrorCode::kInvalidArgument, "empty spectrum");
  const auto [lo_it, hi_it] = std::minmax_element(g.values.begin(), g.values.end());
  const double lo = *lo_it, range = *hi_it - *lo_it;
  cv::Mat img(static_cast<int>(g.rows), static_cast<int>(g.cols), CV_8UC1);
  for (std::size_t r = 0; r < g.rows; ++r)
    for (std::size_t c = 0; c < g.cols; ++c) {
      const double v = range > 0.0 ? (g.at(r, c) - lo) / range * 255.0 : 0.0;
      img.at<std::uint8_t>(static_cast<int>(r), static_cast<int>(c)) =
          static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
    }
  bool ok = false;
  try {
    ok = cv::imwrite(path.string(), img);
  } catch (const cv::Exception& e) {
    raise(ErrorCode::kIoFailure, e.what());
  }
  check(ok, ErrorCode::kIoFailure, "cannot write " + path.string());
}

void save_spectrum_grid(const SpectrumImage& spectrum, const std::filesystem::path& path) {
  static_assert(std::endian::native == std::endian::little);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  check(static_cast<bool>(out), ErrorCode::kIoFailure, "cannot open " + path.string());
  auto put = [&](const auto& v) { out.write(reinterpret_cast<const char*>(&v), sizeof(v)); };
  out.write(kGridMagic, sizeof(kGridMagic));
  put(kGridVersion);
  put(static_cast<std::uint32_t>(spectrum.magnitude.rows));
  put(static_cast<std::uint32_t>(spectrum.magnitude.cols));
  put(static_cast<std::uint64_t>(spectrum.n_images));
  put(static_cast<std::uint8_t>(spectrum.dc_centered));
  put(static_cast<std::uint8_t>(spectrum.log_scaled));
  for (double v : spectrum.magnitude.values) put(static_cast<float>(v));
  check(static_cast<bool>(out), ErrorCode::kIoFailure, "write failed for " + path.string());
}

SpectrumImage load_spectrum_grid(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  check(static_cast<bool>(in), ErrorCode::kIoFailure, "cannot open " + path.string());
  auto get = [&](auto& v) {
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    check(static_cast<bool>(in), ErrorCode::kTruncatedFile, path.string() + " is truncated");
  };
  char magic[4];
  in.read(magic, 4);
  check(in && std::memcmp(magic, kGridMagic, 4) == 0, ErrorCode::kBadMagic, "not a spectrum grid file");
  std::uint32_t version = 0, rows = 0, cols = 0;
  std::uint64_t n = 0;
  std::uint8_t centered = 0, logged = 0;
  get(version);
  check(version == kGridVersion, ErrorCode::kFormatVersionUnsupported, "unsupported grid version");
  get(rows);
  get(cols);
  get(n);
  get(centered);
  get(logged);
  SpectrumImage s;
  s.magnitude = Grid(rows, cols);
  s.n_images = n;
  s.dc_centered = centered != 0;
  s.log_scaled = logged != 0;
  for (auto& v : s.magnitude.values) {
    float f = 0.0f;
    get(f);
    v = f;
  }
  return s;
}

}  // namespace ufd
