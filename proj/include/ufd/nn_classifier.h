#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "ufd/feature_bank.h"

namespace ufd {

/// Result of scoring one query against a bank.
///
/// d_real_k / d_fake_k are the mean of the k smallest cosine distances to the
/// real / fake entries. score_fake = d_real_k - d_fake_k, so a query sitting
/// closer to the fake side scores positive. A zero margin is a real decision.
struct ScoredPrediction {
  double score_fake = 0.0;
  Label decision = Label::kReal;
  double d_real_k = 0.0;
  double d_fake_k = 0.0;
  std::size_t k = 1;
};

/// 1 - cos(a, b), clamped to [0, 2]. Computed in double precision.
double cosine_distance(std::span<const float> a, std::span<const float> b);

/// Instrumentation for the exhaustive search.
struct SearchStats {
  std::uint64_t distance_evaluations = 0;
};

/// Exact k-nearest-neighbor score of one query. k = 1 is the plain
/// nearest-neighbor rule.
ScoredPrediction knn_score(std::span<const float> query, const FeatureBank& bank, std::size_t k,
                           SearchStats* stats = nullptr);

/// Scores one query for several k values from a single pass over the bank.
std::vector<ScoredPrediction> knn_score_multi(std::span<const float> query, const FeatureBank& bank,
                                              std::span<const std::size_t> ks,
                                              SearchStats* stats = nullptr);

/// Scores every query, preserving order. Queries are split across `threads`
/// workers (0 picks the hardware concurrency); output does not depend on it.
std::vector<ScoredPrediction> knn_batch(std::span<const std::vector<float>> queries,
                                        const FeatureBank& bank, std::size_t k,
                                        std::size_t threads = 0);

/// Same, taking the queries' raw vectors from a bank.
std::vector<ScoredPrediction> knn_batch(const FeatureBank& queries, const FeatureBank& bank,
                                        std::size_t k, std::size_t threads = 0);

enum class RankDirection { kClosest, kFarthest };

struct RankedQuery {
  std::size_t query_index = 0;
  double distance = 0.0;
};

/// Ranks queries by their nearest-neighbor distance to one label side of the
/// bank and returns the first top_m. Ties go to the lower query index.
std::vector<RankedQuery> rank_by_distance(std::span<const std::vector<float>> queries, Label side,
                                          const FeatureBank& bank, RankDirection direction,
                                          std::size_t top_m);

std::vector<RankedQuery> rank_by_distance(const FeatureBank& queries, Label side,
                                          const FeatureBank& bank, RankDirection direction,
                                          std::size_t top_m);

}  // namespace ufd
