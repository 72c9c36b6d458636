#include "ufd/nn_classifier.h"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>
#include <thread>

#include "ufd/error.h"

namespace ufd {
namespace {

double dot(std::span<const double> a, const float* b) {
  const std::size_t n = a.size();
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t j = 0;
  for (; j + 4 <= n; j += 4) {
    s0 += a[j] * b[j];
    s1 += a[j + 1] * b[j + 1];
    s2 += a[j + 2] * b[j + 2];
    s3 += a[j + 3] * b[j + 3];
  }
  for (; j < n; ++j) s0 += a[j] * b[j];
  return (s0 + s1) + (s2 + s3);
}

std::vector<double> normalized_query(std::span<const float> query, std::size_t dim) {
  check(query.size() == dim, ErrorCode::kDimensionMismatch,
        "query has length " + std::to_string(query.size()) + ", bank dim is " + std::to_string(dim));
  double sq = 0.0;
  for (float v : query) {
    check(std::isfinite(v), ErrorCode::kNonFiniteValue, "query contains a non-finite value");
    sq += static_cast<double>(v) * v;
  }
  const double norm = std::sqrt(sq);
  check(norm >= kMinVectorNorm, ErrorCode::kZeroNormVector, "query has zero norm");
  std::vector<double> out(query.size());
  for (std::size_t j = 0; j < query.size(); ++j) out[j] = query[j] / norm;
  return out;
}

double clamp_distance(double d) { return std::clamp(d, 0.0, 2.0); }

struct SideDistances {
  std::vector<double> real;
  std::vector<double> fake;
};

void distance_pass(std::span<const double> query, const FeatureBank& bank, SideDistances& out,
                   SearchStats* stats) {
  out.real.clear();
  out.fake.clear();
  const std::size_t dim = bank.dim();
  const float* units = bank.unit_matrix().data();
  for (std::size_t i = 0; i < bank.size(); ++i) {
    const double d = clamp_distance(1.0 - dot(query, units + i * dim));
    (bank.label(i) == Label::kFake ? out.fake : out.real).push_back(d);
  }
  if (stats) stats->distance_evaluations += bank.size();
}

void check_sides(const FeatureBank& bank, std::size_t max_k) {
  const std::size_t n_real = bank.count(Label::kReal);
  const std::size_t n_fake = bank.count(Label::kFake);
  check(n_real > 0 && n_fake > 0, ErrorCode::kEmptyLabelSide,
        "bank needs both real and fake entries (has " + std::to_string(n_real) + " real, " +
            std::to_string(n_fake) + " fake)");
  check(max_k <= std::min(n_real, n_fake), ErrorCode::kKTooLarge,
        "k=" + std::to_string(max_k) + " exceeds the smaller label side (" +
            std::to_string(std::min(n_real, n_fake)) + ")");
}

ScoredPrediction make_prediction(std::span<const double> real_sorted,
                                 std::span<const double> fake_sorted, std::size_t k) {
  ScoredPrediction p;
  p.k = k;
  double sr = 0.0, sf = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    sr += real_sorted[j];
    sf += fake_sorted[j];
  }
  p.d_real_k = sr / static_cast<double>(k);
  p.d_fake_k = sf / static_cast<double>(k);
  p.score_fake = p.d_real_k - p.d_fake_k;
  p.decision = p.score_fake > 0.0 ? Label::kFake : Label::kReal;
  return p;
}

std::vector<ScoredPrediction> score_with(std::span<const float> query, const FeatureBank& bank,
                                         std::span<const std::size_t> ks, SideDistances& scratch,
                                         SearchStats* stats) {
  const auto q = normalized_query(query, bank.dim());
  distance_pass(q, bank, scratch, stats);
  const std::size_t max_k = *std::max_element(ks.begin(), ks.end());
  auto head = [max_k](std::vector<double>& v) {
    std::partial_sort(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(max_k), v.end());
  };
  head(scratch.real);
  head(scratch.fake);
  std::vector<ScoredPrediction> out;
  out.reserve(ks.size());
  for (auto k : ks) out.push_back(make_prediction(scratch.real, scratch.fake, k));
  return out;
}

void validate_ks(const FeatureBank& bank, std::span<const std::size_t> ks) {
  check(!ks.empty(), ErrorCode::kInvalidArgument, "no k values given");
  for (auto k : ks) check(k > 0, ErrorCode::kInvalidArgument, "k must be positive");
  check_sides(bank, *std::max_element(ks.begin(), ks.end()));
}

template <typename QueryAt>
std::vector<ScoredPrediction> batch_impl(std::size_t n, QueryAt query_at, const FeatureBank& bank,
                                         std::size_t k, std::size_t threads) {
  const std::size_t ks[] = {k};
  validate_ks(bank, ks);
  std::vector<ScoredPrediction> out(n);
  if (n == 0) return out;
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, n);

  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::size_t> error_index(threads, n);
  auto work = [&](std::size_t t) {
    const std::size_t begin = n * t / threads;
    const std::size_t end = n * (t + 1) / threads;
    SideDistances scratch;
    for (std::size_t i = begin; i < end; ++i) {
      try {
        out[i] = score_with(query_at(i), bank, ks, scratch, nullptr).front();
      } catch (...) {
        errors[t] = std::current_exception();
        error_index[t] = i;
        return;
      }
    }
  };
  if (threads == 1) {
    work(0);
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work, t);
  }

  // Chunks are contiguous and ordered, so the first failing chunk holds the
  // lowest failing index.
  for (std::size_t t = 0; t < threads; ++t) {
    if (!errors[t]) continue;
    try {
      std::rethrow_exception(errors[t]);
    } catch (const Error& e) {
      throw Error(e.code(), "query " + std::to_string(error_index[t]) + ": " + e.what());
    }
  }
  return out;
}

template <typename QueryAt>
std::vector<RankedQuery> rank_impl(std::size_t n, QueryAt query_at, Label side,
                                   const FeatureBank& bank, RankDirection direction,
                                   std::size_t top_m) {
  check(bank.count(side) > 0, ErrorCode::kEmptyLabelSide,
        std::string("bank has no ") + std::string(to_string(side)) + " entries");
  check(top_m <= n, ErrorCode::kInvalidArgument,
        "top_m=" + std::to_string(top_m) + " exceeds query count " + std::to_string(n));
  const std::size_t dim = bank.dim();
  const float* units = bank.unit_matrix().data();
  std::vector<RankedQuery> ranked(n);
  for (std::size_t qi = 0; qi < n; ++qi) {
    const auto q = normalized_query(query_at(qi), dim);
    double best = 2.0;
    for (std::size_t i = 0; i < bank.size(); ++i) {
      if (bank.label(i) != side) continue;
      best = std::min(best, clamp_distance(1.0 - dot(q, units + i * dim)));
    }
    ranked[qi] = {qi, best};
  }
  auto order = [direction](const RankedQuery& a, const RankedQuery& b) {
    if (a.distance != b.distance)
      return direction == RankDirection::kClosest ? a.distance < b.distance : a.distance > b.distance;
    return a.query_index < b.query_index;
  };
  std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(top_m), ranked.end(),
                    order);
  ranked.resize(top_m);
  return ranked;
}

}  // namespace

double cosine_distance(std::span<const float> a, std::span<const float> b) {
  check(a.size() == b.size(), ErrorCode::kDimensionMismatch,
        "vectors have lengths " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    ab += static_cast<double>(a[j]) * b[j];
    aa += static_cast<double>(a[j]) * a[j];
    bb += static_cast<double>(b[j]) * b[j];
  }
  check(std::sqrt(aa) >= kMinVectorNorm && std::sqrt(bb) >= kMinVectorNorm,
        ErrorCode::kZeroNormVector, "cosine distance of a zero vector");
  return clamp_distance(1.0 - ab / std::sqrt(aa * bb));
}

ScoredPrediction knn_score(std::span<const float> query, const FeatureBank& bank, std::size_t k,
                           SearchStats* stats) {
  const std::size_t ks[] = {k};
  return knn_score_multi(query, bank, ks, stats).front();
}

std::vector<ScoredPrediction> knn_score_multi(std::span<const float> query, const FeatureBank& bank,
                                              std::span<const std::size_t> ks, SearchStats* stats) {
  validate_ks(bank, ks);
  SideDistances scratch;
  return score_with(query, bank, ks, scratch, stats);
}

std::vector<ScoredPrediction> knn_batch(std::span<const std::vector<float>> queries,
                                        const FeatureBank& bank, std::size_t k, std::size_t threads) {
  return batch_impl(
      queries.size(), [&](std::size_t i) { return std::span<const float>(queries[i]); }, bank, k,
      threads);
}

std::vector<ScoredPrediction> knn_batch(const FeatureBank& queries, const FeatureBank& bank,
                                        std::size_t k, std::size_t threads) {
  return batch_impl(
      queries.size(), [&](std::size_t i) { return queries.raw(i); }, bank, k, threads);
}

std::vector<RankedQuery> rank_by_distance(std::span<const std::vector<float>> queries, Label side,
                                          const FeatureBank& bank, RankDirection direction,
                                          std::size_t top_m) {
  return rank_impl(
      queries.size(), [&](std::size_t i) { return std::span<const float>(queries[i]); }, side, bank,
      direction, top_m);
}

std::vector<RankedQuery> rank_by_distance(const FeatureBank& queries, Label side,
                                          const FeatureBank& bank, RankDirection direction,
                                          std::size_t top_m) {
  return rank_impl(
      queries.size(), [&](std::size_t i) { return queries.raw(i); }, side, bank, direction, top_m);
}

}  // namespace ufd
