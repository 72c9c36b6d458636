#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "ufd/feature_bank.h"

namespace ufd {

/// A classifier score (higher means more fake) with its ground truth.
struct LabeledScore {
  double score = 0.0;
  Label truth = Label::kReal;
};

struct PrPoint {
  double recall = 0.0;
  double precision = 0.0;
  friend bool operator==(const PrPoint&, const PrPoint&) = default;
};

enum class ApConvention {
  /// Non-interpolated step sum over the descending-score sweep.
  kStep,
  /// 11-point interpolated (PASCAL VOC 2007 style).
  kInterpolated11,
};

std::string_view to_string(ApConvention c);

/// Fake is the positive class; equal scores enter the sweep together.
double average_precision(std::span<const LabeledScore> scores,
                         ApConvention convention = ApConvention::kStep);

/// One point per distinct score, swept from the highest score down. The last
/// point is (1, fake base rate).
std::vector<PrPoint> pr_curve(std::span<const LabeledScore> scores);

struct AccuracyBreakdown {
  /// Plain accuracy: correct / total.
  double accuracy = 0.0;
  double real_accuracy = 0.0;
  double fake_accuracy = 0.0;
  std::size_t n_real = 0;
  std::size_t n_fake = 0;

  /// Mean of the two per-class accuracies.
  double balanced() const { return 0.5 * (real_accuracy + fake_accuracy); }
};

/// Decides fake iff score > threshold. A class with no samples reports 0.
AccuracyBreakdown accuracy_at_threshold(std::span<const LabeledScore> scores, double threshold);

struct Calibration {
  double threshold = 0.0;
  /// Balanced accuracy at the threshold.
  double accuracy = 0.0;
};

/// Best balanced-accuracy threshold among every observed score, every
/// midpoint between consecutive distinct scores and the sentinels min-1 and
/// max+1. Ties go to the candidate nearest the middle of the score range,
/// then to the lower candidate.
Calibration calibrate_threshold(std::span<const LabeledScore> scores);

enum class ThresholdSource { kValidation, kOracle, kFixed };

std::string_view to_string(ThresholdSource s);
ThresholdSource parse_threshold_source(std::string_view text);

struct EvalReport {
  double ap = 0.0;
  double accuracy = 0.0;
  double real_accuracy = 0.0;
  double fake_accuracy = 0.0;
  double threshold = 0.0;
  ThresholdSource threshold_source = ThresholdSource::kFixed;
  ApConvention ap_convention = ApConvention::kStep;
  std::vector<PrPoint> pr_curve;
  std::size_t n_real = 0;
  std::size_t n_fake = 0;
};

void to_json(nlohmann::json& j, const EvalReport& r);
void from_json(const nlohmann::json& j, EvalReport& r);

/// AP, accuracy breakdown and PR curve at a given threshold.
EvalReport evaluate(std::span<const LabeledScore> scores, double threshold, ThresholdSource source,
                    ApConvention convention = ApConvention::kStep);

/// Calibrates on the test scores themselves, then evaluates them.
EvalReport oracle_evaluate(std::span<const LabeledScore> scores,
                           ApConvention convention = ApConvention::kStep);

using NamedReport = std::pair<std::string, EvalReport>;

/// Unweighted mean of per-set AP, summed in the given order.
double aggregate_map(std::span<const NamedReport> reports);
/// Unweighted mean of per-set accuracy.
double aggregate_accuracy(std::span<const NamedReport> reports);

}  // namespace ufd
