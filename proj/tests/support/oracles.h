#pragma once

// Reference implementations used by the tests. They are written directly from
// the definitions, share no code with the library, and favour clarity over
// speed.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "ufd/feature_bank.h"
#include "ufd/metrics.h"

namespace oracle {

using ufd::Label;

inline double cosine_distance(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return 1.0 - dot / (std::sqrt(na) * std::sqrt(nb));
}

struct KnnResult {
  double d_real = 0;
  double d_fake = 0;
  Label decision = Label::kReal;
};

/// Computes every distance, sorts each side fully, averages the first k.
inline KnnResult knn(const std::vector<double>& query, const std::vector<std::vector<double>>& bank,
                     const std::vector<Label>& labels, std::size_t k) {
  std::vector<double> real, fake;
  for (std::size_t i = 0; i < bank.size(); ++i)
    (labels[i] == Label::kFake ? fake : real).push_back(cosine_distance(query, bank[i]));
  std::sort(real.begin(), real.end());
  std::sort(fake.begin(), fake.end());
  KnnResult r;
  for (std::size_t i = 0; i < k; ++i) {
    r.d_real += real[i];
    r.d_fake += fake[i];
  }
  r.d_real /= static_cast<double>(k);
  r.d_fake /= static_cast<double>(k);
  r.decision = r.d_real - r.d_fake > 0 ? Label::kFake : Label::kReal;
  return r;
}

/// The plain nearest-neighbor rule: fake iff the closest fake entry is
/// strictly closer than the closest real entry.
inline Label min_distance_rule(const std::vector<double>& query, const std::vector<std::vector<double>>& bank,
                               const std::vector<Label>& labels) {
  double best_real = INFINITY, best_fake = INFINITY;
  for (std::size_t i = 0; i < bank.size(); ++i) {
    const double d = cosine_distance(query, bank[i]);
    if (labels[i] == Label::kFake)
      best_fake = std::min(best_fake, d);
    else
      best_real = std::min(best_real, d);
  }
  return best_fake < best_real ? Label::kFake : Label::kReal;
}

/// Average precision by walking thresholds from the top score down. At each
/// distinct score t, everything with score >= t is predicted fake.
inline double average_precision(const std::vector<ufd::LabeledScore>& scores) {
  std::vector<double> thresholds;
  std::size_t positives = 0;
  for (const auto& s : scores) {
    thresholds.push_back(s.score);
    positives += s.truth == Label::kFake;
  }
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  double ap = 0, prev_recall = 0;
  for (double t : thresholds) {
    std::size_t tp = 0, predicted = 0;
    for (const auto& s : scores)
      if (s.score >= t) {
        ++predicted;
        tp += s.truth == Label::kFake;
      }
    const double recall = static_cast<double>(tp) / static_cast<double>(positives);
    const double precision = static_cast<double>(tp) / static_cast<double>(predicted);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
  }
  return ap;
}

/// Balanced accuracy with the rule "fake iff score > t".
inline double balanced_accuracy(const std::vector<ufd::LabeledScore>& scores, double t) {
  double real_ok = 0, fake_ok = 0, n_real = 0, n_fake = 0;
  for (const auto& s : scores) {
    if (s.truth == Label::kFake) {
      ++n_fake;
      fake_ok += s.score > t;
    } else {
      ++n_real;
      real_ok += s.score <= t;
    }
  }
  return 0.5 * (real_ok / n_real + fake_ok / n_fake);
}

/// Every threshold that can change a decision: each score, each gap between
/// neighbours, and points outside the range.
inline double best_balanced_accuracy(const std::vector<ufd::LabeledScore>& scores) {
  std::vector<double> v;
  for (const auto& s : scores) v.push_back(s.score);
  std::sort(v.begin(), v.end());
  std::vector<double> cands = {v.front() - 1, v.back() + 1};
  for (std::size_t i = 0; i < v.size(); ++i) {
    cands.push_back(v[i]);
    if (i + 1 < v.size()) cands.push_back(0.5 * (v[i] + v[i + 1]));
  }
  double best = 0;
  for (double t : cands) best = std::max(best, balanced_accuracy(scores, t));
  return best;
}

/// Direct 2-D Gaussian convolution with clamp-to-edge borders, in double.
/// Operates on one channel plane and returns unrounded values.
inline std::vector<double> dense_blur(const std::vector<double>& plane, int w, int h, double sigma) {
  const int r = static_cast<int>(std::ceil(3 * sigma));
  std::vector<double> kernel;
  double total = 0;
  for (int dy = -r; dy <= r; ++dy)
    for (int dx = -r; dx <= r; ++dx) {
      const double v = std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));
      kernel.push_back(v);
      total += v;
    }
  for (auto& v : kernel) v /= total;
  std::vector<double> out(plane.size(), 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0;
      std::size_t n = 0;
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
          const int sx = std::clamp(x + dx, 0, w - 1), sy = std::clamp(y + dy, 0, h - 1);
          acc += kernel[n++] * plane[static_cast<std::size_t>(sy) * w + sx];
        }
      out[static_cast<std::size_t>(y) * w + x] = acc;
    }
  return out;
}

}  // namespace oracle

namespace testutil {

/// Random bank with Gaussian vectors; labels random but both sides have at
/// least `min_per_side` entries.
struct RandomBank {
  std::vector<std::vector<double>> vectors;
  std::vector<ufd::Label> labels;
  ufd::FeatureBank bank;
};

inline std::vector<float> gaussian_vector(std::mt19937_64& gen, std::size_t dim) {
  std::normal_distribution<float> n(0.0f, 1.0f);
  std::vector<float> v(dim);
  for (;;) {
    double norm = 0;
    for (auto& x : v) {
      x = n(gen);
      norm += double(x) * x;
    }
    if (norm > 1e-6) return v;
  }
}

inline RandomBank random_bank(std::mt19937_64& gen, std::size_t n, std::size_t dim, std::size_t min_per_side = 1,
                              const std::string& encoder = "test-enc") {
  RandomBank rb;
  std::vector<ufd::BankRecord> records;
  std::bernoulli_distribution coin(0.5);
  for (std::size_t i = 0; i < n; ++i) {
    ufd::BankRecord r;
    r.vector = gaussian_vector(gen, dim);
    if (i < min_per_side)
      r.label = ufd::Label::kReal;
    else if (i < 2 * min_per_side)
      r.label = ufd::Label::kFake;
    else
      r.label = coin(gen) ? ufd::Label::kFake : ufd::Label::kReal;
    rb.vectors.emplace_back(r.vector.begin(), r.vector.end());
    rb.labels.push_back(r.label);
    records.push_back(std::move(r));
  }
  rb.bank = ufd::build_bank(std::move(records), dim, {{"encoder_id", encoder}, {"layer_id", "L0"}});
  return rb;
}

inline std::vector<ufd::LabeledScore> random_scores(std::mt19937_64& gen, std::size_t n, bool with_ties) {
  std::vector<ufd::LabeledScore> s(n);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::uniform_int_distribution<int> small(0, 9);
  for (std::size_t i = 0; i < n; ++i) {
    s[i].truth = (i % 2 == 0) ? ufd::Label::kReal : ufd::Label::kFake;
    const double shift = s[i].truth == ufd::Label::kFake ? 0.7 : 0.0;
    s[i].score = with_ties ? small(gen) * 0.1 + shift : nd(gen) + shift;
  }
  std::shuffle(s.begin(), s.end(), gen);
  return s;
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("ufd_test_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testutil
