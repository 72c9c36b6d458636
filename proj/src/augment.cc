#include "ufd/augment.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <tuple>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "ufd/error.h"
#include "ufd/random.h"

namespace ufd {
namespace {

cv::Mat to_bgr_mat(const RasterImage& image) {
  image.validate();
  cv::Mat rgb(image.height, image.width, CV_8UC3, const_cast<std::uint8_t*>(image.pixels.data()));
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  return bgr;
}

RasterImage from_bgr_mat(const cv::Mat& bgr) {
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  RasterImage out(rgb.cols, rgb.rows);
  for (int y = 0; y < rgb.rows; ++y)
    std::copy_n(rgb.ptr<std::uint8_t>(y), static_cast<std::size_t>(rgb.cols) * 3,
                out.pixels.begin() + static_cast<std::ptrdiff_t>(y) * rgb.cols * 3);
  return out;
}

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0)); }

// Stream ids for the per-draw counter words.
enum : std::uint64_t { kBlurCoin = 0, kSigma = 1, kJpegCoin = 2, kQuality = 3 };

}  // namespace

RasterImage::RasterImage(int w, int h, std::uint8_t fill)
    : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * kChannels, fill) {
  check(w > 0 && h > 0, ErrorCode::kInvalidArgument, "image dimensions must be positive");
}

void RasterImage::validate() const {
  check(width > 0 && height > 0, ErrorCode::kInvalidArgument, "image dimensions must be positive");
  check(pixels.size() == static_cast<std::size_t>(width) * height * kChannels,
        ErrorCode::kInvalidArgument, "pixel buffer length does not match dimensions");
}

RasterImage read_image(const std::filesystem::path& path) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  check(!bgr.empty(), ErrorCode::kIoFailure, "cannot decode image " + path.string());
  return from_bgr_mat(bgr);
}

void write_png(const RasterImage& image, const std::filesystem::path& path) {
  check(cv::imwrite(path.string(), to_bgr_mat(image)), ErrorCode::kIoFailure,
        "cannot write " + path.string());
}

void write_jpeg(const RasterImage& image, const std::filesystem::path& path, int quality) {
  const std::vector<int> params = {cv::IMWRITE_JPEG_QUALITY, quality};
  check(cv::imwrite(path.string(), to_bgr_mat(image), params), ErrorCode::kIoFailure,
        "cannot write " + path.string());
}

std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir) {
  check(std::filesystem::is_directory(dir), ErrorCode::kIoFailure, dir.string() + " is not a directory");
  std::vector<std::filesystem::path> out;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    auto ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp" || ext == ".webp")
      out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<double> gaussian_kernel(double sigma) {
  check(sigma > 0.0 && std::isfinite(sigma), ErrorCode::kInvalidArgument, "sigma must be positive");
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> taps(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    taps[i + radius] = std::exp(-(i * i) / (2.0 * sigma * sigma));
    sum += taps[i + radius];
  }
  for (auto& t : taps) t /= sum;
  return taps;
}

RasterImage gaussian_blur(const RasterImage& image, double sigma) {
  image.validate();
  check(sigma >= 0.0, ErrorCode::kInvalidArgument, "sigma must be non-negative");
  if (sigma == 0.0) return image;
  const auto taps = gaussian_kernel(sigma);
  const int radius = static_cast<int>(taps.size() / 2);
  const int w = image.width, h = image.height, ch = RasterImage::kChannels;

  std::vector<double> tmp(image.pixels.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < ch; ++c) {
        double acc = 0.0;
        for (int k = -radius; k <= radius; ++k)
          acc += taps[k + radius] * image.at(std::clamp(x + k, 0, w - 1), y, c);
        tmp[(static_cast<std::size_t>(y) * w + x) * ch + c] = acc;
      }

  RasterImage out(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < ch; ++c) {
        double acc = 0.0;
        for (int k = -radius; k <= radius; ++k)
          acc += taps[k + radius] * tmp[(static_cast<std::size_t>(std::clamp(y + k, 0, h - 1)) * w + x) * ch + c];
        out.at(x, y, c) = to_byte(acc);
      }
  return out;
}

RasterImage jpeg_compress(const RasterImage& image, int quality) {
  check(quality >= 1 && quality <= 100, ErrorCode::kInvalidArgument,
        "JPEG quality must be in [1, 100], got " + std::to_string(quality));
  std::vector<std::uint8_t> encoded;
  const std::vector<int> params = {cv::IMWRITE_JPEG_QUALITY, quality};
  bool ok = false;
  try {
    ok = cv::imencode(".jpg", to_bgr_mat(image), encoded, params);
  } catch (const cv::Exception& e) {
    raise(ErrorCode::kEncoderFailure, e.what());
  }
  check(ok, ErrorCode::kEncoderFailure, "JPEG encoder rejected the image");
  cv::Mat decoded = cv::imdecode(encoded, cv::IMREAD_COLOR);
  check(!decoded.empty(), ErrorCode::kEncoderFailure, "JPEG decoder failed");
  return from_bgr_mat(decoded);
}

void AugmentPolicy::validate() const {
  check(probability >= 0.0 && probability <= 1.0, ErrorCode::kInvalidArgument,
        "probability must be in [0, 1]");
  check(sigma_lo >= 0.0 && sigma_lo <= sigma_hi, ErrorCode::kInvalidArgument,
        "sigma range must satisfy 0 <= lo <= hi");
  check(quality_lo >= 1 && quality_lo <= quality_hi && quality_hi <= 100, ErrorCode::kInvalidArgument,
        "quality range must satisfy 1 <= lo <= hi <= 100");
}

void to_json(nlohmann::json& j, const AugmentPolicy& p) {
  j = nlohmann::json{{"probability", p.probability}, {"sigma_range", {p.sigma_lo, p.sigma_hi}},
                     {"jpeg_quality_range", {p.quality_lo, p.quality_hi}}, {"seed", p.seed},
                     {"blur_first", p.blur_first}};
}

void from_json(const nlohmann::json& j, AugmentPolicy& p) {
  p.probability = j.at("probability").get<double>();
  p.sigma_lo = j.at("sigma_range").at(0).get<double>();
  p.sigma_hi = j.at("sigma_range").at(1).get<double>();
  p.quality_lo = j.at("jpeg_quality_range").at(0).get<int>();
  p.quality_hi = j.at("jpeg_quality_range").at(1).get<int>();
  p.seed = j.value("seed", std::uint64_t{0});
  p.blur_first = j.value("blur_first", true);
}

AugmentDraw draw_augmentation(const AugmentPolicy& policy, std::uint64_t draw_id) {
  policy.validate();
  auto word = [&](std::uint64_t stream) { return counter_word(policy.seed, stream, draw_id); };
  AugmentDraw d;
  d.blur = unit_interval(word(kBlurCoin)) < policy.probability;
  d.sigma = policy.sigma_lo +
            (policy.sigma_hi - policy.sigma_lo) * unit_interval_open_closed(word(kSigma));
  d.jpeg = unit_interval(word(kJpegCoin)) < policy.probability;
  const auto span = static_cast<std::uint64_t>(policy.quality_hi - policy.quality_lo + 1);
  d.quality = policy.quality_lo + static_cast<int>(word(kQuality) % span);
  return d;
}

RasterImage apply_policy(const RasterImage& image, const AugmentPolicy& policy, std::uint64_t draw_id) {
  const auto d = draw_augmentation(policy, draw_id);
  RasterImage out = image;
  auto blur = [&] {
    if (d.blur) out = gaussian_blur(out, d.sigma);
  };
  auto jpeg = [&] {
    if (d.jpeg) out = jpeg_compress(out, d.quality);
  };
  if (policy.blur_first) {
    blur();
    jpeg();
  } else {
    jpeg();
    blur();
  }
  return out;
}

std::string_view to_string(PerturbationAxis axis) {
  switch (axis) {
    case PerturbationAxis::kNone: return "none";
    case PerturbationAxis::kBlur: return "blur";
    case PerturbationAxis::kJpeg: return "jpeg";
  }
  return "none";
}

RasterImage Perturbation::operator()(const RasterImage& image) const {
  switch (axis) {
    case PerturbationAxis::kBlur: return gaussian_blur(image, level);
    case PerturbationAxis::kJpeg: return jpeg_compress(image, static_cast<int>(level));
    case PerturbationAxis::kNone: break;
  }
  return image;
}

std::vector<SweepRow> robustness_sweep(std::span<const std::string> test_sets,
                                       const PerturbedScoreFn& score_fn,
                                       std::span<const double> blur_grid,
                                       std::span<const int> jpeg_grid) {
  check(!blur_grid.empty() || !jpeg_grid.empty(), ErrorCode::kInvalidArgument,
        "robustness sweep needs at least one grid value");
  check(!test_sets.empty(), ErrorCode::kEmptyInput, "robustness sweep needs test sets");
  std::vector<Perturbation> levels;
  for (double s : blur_grid) {
    check(s >= 0.0, ErrorCode::kInvalidArgument, "blur sigma must be non-negative");
    levels.push_back({PerturbationAxis::kBlur, s});
  }
  for (int q : jpeg_grid) {
    check(q >= 1 && q <= 100, ErrorCode::kInvalidArgument, "JPEG quality must be in [1, 100]");
    levels.push_back({PerturbationAxis::kJpeg, static_cast<double>(q)});
  }
  std::vector<SweepRow> rows;
  for (const auto& p : levels)
    for (const auto& name : test_sets) {
      const auto scores = score_fn(name, p);
      rows.push_back({p.axis, p.level, name, average_precision(scores)});
    }
  return rows;
}

std::vector<FamilySweepRow> group_sweep_by_family(std::span<const SweepRow> rows,
                                                  const std::map<std::string, std::string>& family_of) {
  // Keep first-seen order of (axis, level, family).
  std::vector<FamilySweepRow> out;
  std::map<std::tuple<int, double, std::string>, std::size_t> slot;
  std::vector<double> sums;
  for (const auto& r : rows) {
    auto it = family_of.find(r.test_set);
    const std::string family = it == family_of.end() ? "other" : it->second;
    const auto key = std::make_tuple(static_cast<int>(r.axis), r.level, family);
    auto [pos, inserted] = slot.try_emplace(key, out.size());
    if (inserted) {
      out.push_back({r.axis, r.level, family, 0.0, 0});
      sums.push_back(0.0);
    }
    sums[pos->second] += r.ap;
    out[pos->second].members += 1;
  }
  for (std::size_t i = 0; i < out.size(); ++i) out[i].mean_ap = sums[i] / static_cast<double>(out[i].members);
  return out;
}

std::string sweep_to_csv(std::span<const SweepRow> rows,
                         const std::map<std::string, std::string>& family_of) {
  std::ostringstream os;
  os.precision(17);
  os << "axis,level,test_set,family,ap\n";
  for (const auto& r : rows) {
    auto it = family_of.find(r.test_set);
    os << to_string(r.axis) << ',' << r.level << ',' << r.test_set << ','
       << (it == family_of.end() ? "other" : it->second) << ',' << r.ap << '\n';
  }
  return os.str();
}

std::string family_sweep_to_csv(std::span<const FamilySweepRow> rows) {
  std::ostringstream os;
  os.precision(17);
  os << "axis,level,family,members,mean_ap\n";
  for (const auto& r : rows)
    os << to_string(r.axis) << ',' << r.level << ',' << r.family << ',' << r.members << ','
       << r.mean_ap << '\n';
  return os.str();
}

}  // namespace ufd
