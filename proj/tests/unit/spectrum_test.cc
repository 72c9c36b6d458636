#include "ufd/spectrum.h"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "oracles.h"
#include "ufd/error.h"

namespace {

using ufd::Grid;
using ufd::RasterImage;

RasterImage gray(int s, const std::function<double(int, int)>& f) {
  RasterImage img(s, s);
  for (int y = 0; y < s; ++y)
    for (int x = 0; x < s; ++x) {
      const auto v = static_cast<std::uint8_t>(std::clamp(std::lround(f(x, y)), 0L, 255L));
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = v;
    }
  return img;
}

double luma(const RasterImage& img, int x, int y) {
  return 0.299 * img.at(x, y, 0) + 0.587 * img.at(x, y, 1) + 0.114 * img.at(x, y, 2);
}

TEST(Highpass, ConstantImageIsZero) {
  const auto r = ufd::highpass(RasterImage(9, 7, 77), 3);
  for (double v : r.values) EXPECT_EQ(v, 0.0);
}

TEST(Highpass, ImpulseSurvives) {
  RasterImage img(9, 9);
  for (int c = 0; c < 3; ++c) img.at(4, 4, c) = 200;
  const auto r = ufd::highpass(img, 3);
  for (int y = 0; y < 9; ++y)
    for (int x = 0; x < 9; ++x) EXPECT_NEAR(r.at(y, x), x == 4 && y == 4 ? 200.0 : 0.0, 1e-9);
}

TEST(Highpass, CheckerboardMatchesDirectMedian) {
  const int s = 8;
  const auto img = gray(s, [](int x, int y) { return (x + y) % 2 ? 180.0 : 20.0; });
  for (int k : {3, 5}) {
    const auto r = ufd::highpass(img, k);
    double pos = 0, neg = 0;
    for (int y = 0; y < s; ++y)
      for (int x = 0; x < s; ++x) {
        std::vector<double> win;
        for (int dy = -k / 2; dy <= k / 2; ++dy)
          for (int dx = -k / 2; dx <= k / 2; ++dx)
            win.push_back(luma(img, std::clamp(x + dx, 0, s - 1), std::clamp(y + dy, 0, s - 1)));
        std::sort(win.begin(), win.end());
        const double expect = luma(img, x, y) - win[win.size() / 2];
        EXPECT_NEAR(r.at(y, x), expect, 1e-9);
        (expect > 0 ? pos : neg) += std::abs(expect);
      }
    EXPECT_GT(pos, 0);
    EXPECT_GT(neg, 0);
  }
}

TEST(Highpass, KernelChecks) {
  EXPECT_THROW(ufd::highpass(RasterImage(8, 8), 4), ufd::Error);
  try {
    ufd::highpass(RasterImage(4, 4), 5);
    FAIL();
  } catch (const ufd::Error& e) {
    EXPECT_EQ(e.code(), ufd::ErrorCode::kKernelTooLarge);
  }
}

TEST(FourierMagnitude, CosinePeaks) {
  const std::size_t s = 32;
  const double amp = 3.0;
  for (std::size_t f : {1u, 5u, 9u}) {
    Grid g(s, s);
    for (std::size_t r = 0; r < s; ++r)
      for (std::size_t c = 0; c < s; ++c) g.at(r, c) = amp * std::cos(2 * std::numbers::pi * f * c / s);
    const auto m = ufd::fourier_magnitude(g);
    for (std::size_t r = 0; r < s; ++r)
      for (std::size_t c = 0; c < s; ++c) {
        const bool peak = r == 0 && (c == f || c == s - f);
        EXPECT_NEAR(m.at(r, c), peak ? amp * s / 2 : 0.0, 1e-9);
      }
    const auto centered = ufd::center_dc(m);
    EXPECT_NEAR(centered.at(s / 2, s / 2 + f), amp * s / 2, 1e-9);
    EXPECT_NEAR(centered.at(s / 2, s / 2 - f), amp * s / 2, 1e-9);
  }
}

TEST(CenterDc, InvolutionOnEvenSizes) {
  std::mt19937_64 gen(1);
  std::uniform_real_distribution<double> u;
  Grid g(6, 10);
  for (auto& v : g.values) v = u(gen);
  EXPECT_EQ(ufd::center_dc(ufd::center_dc(g)).values, g.values);
  Grid odd(5, 7);
  for (auto& v : odd.values) v = u(gen);
  EXPECT_EQ(ufd::uncenter_dc(ufd::center_dc(odd)).values, odd.values);
  Grid dc(5, 7);
  dc.at(0, 0) = 1;
  EXPECT_EQ(ufd::center_dc(dc).at(2, 3), 1.0);
}

TEST(AverageSpectrum, ConstantCorpusIsZero) {
  std::vector<RasterImage> imgs = {RasterImage(16, 16, 10), RasterImage(16, 16, 200), RasterImage(16, 16, 99)};
  ufd::SpectrumOptions o;
  o.size = 16;
  const auto s = ufd::average_spectrum(imgs, o);
  EXPECT_EQ(s.n_images, 3u);
  for (double v : s.magnitude.values) EXPECT_EQ(v, 0.0);
}

TEST(AverageSpectrum, CosineImagePeaksOnHorizontalAxis) {
  const int n = 32, f = 4;
  const auto img = gray(n, [&](int x, int) { return 127.5 + 100 * std::cos(2 * std::numbers::pi * f * x / n); });
  ufd::SpectrumOptions o;
  o.size = n;
  o.bypass_highpass = true;
  std::vector<RasterImage> imgs = {img};
  const auto s = ufd::average_spectrum(imgs, o);
  EXPECT_TRUE(s.dc_centered);
  const std::size_t c = n / 2;
  double best_other = 0;
  for (std::size_t r = 0; r < static_cast<std::size_t>(n); ++r)
    for (std::size_t k = 0; k < static_cast<std::size_t>(n); ++k) {
      if (r == c && (k == c || k == c + f || k == c - f)) continue;
      best_other = std::max(best_other, s.magnitude.at(r, k));
    }
  EXPECT_NEAR(s.magnitude.at(c, c + f), s.magnitude.at(c, c - f), 1e-9);
  EXPECT_GT(s.magnitude.at(c, c + f), 20 * best_other);
}

TEST(AverageSpectrum, ParsevalWithoutHighpass) {
  std::mt19937_64 gen(2);
  std::vector<RasterImage> imgs;
  for (int i = 0; i < 3; ++i) {
    RasterImage img(24, 24);
    for (auto& p : img.pixels) p = static_cast<std::uint8_t>(gen() & 0xFF);
    imgs.push_back(img);
  }
  ufd::SpectrumOptions o;
  o.size = 24;
  o.bypass_highpass = true;
  const auto s = ufd::average_spectrum(imgs, o);
  double spatial = 0, spectral = 0;
  for (int y = 0; y < 24; ++y)
    for (int x = 0; x < 24; ++x) {
      double m = 0;
      for (const auto& img : imgs) m += luma(img, x, y);
      m /= 3;
      spatial += m * m;
    }
  for (double v : s.magnitude.values) spectral += v * v;
  EXPECT_LT(std::abs(spectral - spatial) / spatial, 1e-6);
}

TEST(AverageSpectrum, DuplicatedCorpusUnchanged) {
  std::mt19937_64 gen(3);
  std::vector<RasterImage> imgs;
  for (int i = 0; i < 3; ++i) {
    RasterImage img(16, 16);
    for (auto& p : img.pixels) p = static_cast<std::uint8_t>(gen() & 0xFF);
    imgs.push_back(img);
  }
  auto doubled = imgs;
  doubled.insert(doubled.end(), imgs.begin(), imgs.end());
  ufd::SpectrumOptions o;
  o.size = 16;
  const auto a = ufd::average_spectrum(imgs, o), b = ufd::average_spectrum(doubled, o);
  for (std::size_t i = 0; i < a.magnitude.values.size(); ++i)
    EXPECT_NEAR(a.magnitude.values[i], b.magnitude.values[i], 1e-9);
}

TEST(AverageSpectrum, TransformsTheMeanNotMeanOfTransforms) {
  const int n = 8;
  const auto a = gray(n, [](int x, int) { return x % 2 ? 150.0 : 50.0; });
  const auto b = gray(n, [](int x, int) { return x % 2 ? 50.0 : 150.0; });
  std::vector<RasterImage> imgs = {a, b};
  ufd::SpectrumOptions o;
  o.size = n;
  o.bypass_highpass = true;
  const auto s = ufd::average_spectrum(imgs, o);
  // The mean image is flat, so only DC survives; each image alone has a
  // strong Nyquist component that a mean of spectra would keep.
  const std::size_t c = n / 2;
  EXPECT_NEAR(s.magnitude.at(c, 0), 0.0, 1e-9);
  std::vector<RasterImage> just_a = {a};
  EXPECT_GT(ufd::average_spectrum(just_a, o).magnitude.at(c, 0), 100.0);
}

TEST(AverageSpectrum, EmptyCorpus) {
  try {
    ufd::average_spectrum({}, {});
    FAIL();
  } catch (const ufd::Error& e) {
    EXPECT_EQ(e.code(), ufd::ErrorCode::kEmptyCorpus);
  }
}

TEST(AverageSpectrum, ResizesAndLogScales) {
  std::vector<RasterImage> imgs = {gray(40, [](int x, int y) { return (x * 7 + y * 3) % 256; })};
  ufd::SpectrumOptions o;
  o.size = 16;
  o.log_scale = true;
  const auto s = ufd::average_spectrum(imgs, o);
  EXPECT_EQ(s.size(), 16u);
  EXPECT_TRUE(s.log_scaled);
  for (double v : s.magnitude.values) {
    EXPECT_TRUE(std::isfinite(v));
    EXPECT_GE(v, 0.0);
  }
}

TEST(RenderSpectrum, BlackHotPixelAndArgmax) {
  const auto dir = testutil::scratch_dir("render");
  ufd::SpectrumImage s;
  s.magnitude = Grid(8, 8);
  ufd::render_spectrum(s, dir / "zero.png");
  for (auto p : ufd::read_image(dir / "zero.png").pixels) EXPECT_EQ(p, 0);

  s.magnitude.at(3, 5) = 2.5;
  ufd::render_spectrum(s, dir / "hot.png");
  const auto hot = ufd::read_image(dir / "hot.png");
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) EXPECT_EQ(hot.at(x, y, 0), x == 5 && y == 3 ? 255 : 0);

  std::mt19937_64 gen(4);
  std::uniform_real_distribution<double> u;
  s.magnitude = Grid(12, 12);
  for (auto& v : s.magnitude.values) v = u(gen);
  s.magnitude.at(7, 2) = 5;
  ufd::render_spectrum(s, dir / "rand.png");
  const auto r = ufd::read_image(dir / "rand.png");
  int best = -1, bx = 0, by = 0;
  for (int y = 0; y < 12; ++y)
    for (int x = 0; x < 12; ++x)
      if (r.at(x, y, 0) > best) {
        best = r.at(x, y, 0);
        bx = x;
        by = y;
      }
  EXPECT_EQ(bx, 2);
  EXPECT_EQ(by, 7);
  std::filesystem::remove_all(dir);
}

TEST(SpectrumGrid, FileRoundTrip) {
  const auto dir = testutil::scratch_dir("grid");
  ufd::SpectrumImage s;
  s.magnitude = Grid(4, 6);
  for (std::size_t i = 0; i < s.magnitude.values.size(); ++i) s.magnitude.values[i] = 0.25 * i;
  s.n_images = 2000;
  s.log_scaled = true;
  ufd::save_spectrum_grid(s, dir / "g.f32");
  EXPECT_EQ(std::filesystem::file_size(dir / "g.f32"), 4 + 4 + 4 + 4 + 8 + 1 + 1 + 24 * 4u);
  const auto back = ufd::load_spectrum_grid(dir / "g.f32");
  EXPECT_EQ(back.magnitude.values, s.magnitude.values);
  EXPECT_EQ(back.n_images, 2000u);
  EXPECT_TRUE(back.log_scaled);
  std::filesystem::remove_all(dir);
}

}  // namespace
