#include "ufd/metrics.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ufd/error.h"

namespace ufd {
namespace {

struct TieGroup {
  double score;
  std::size_t fakes;
  std::size_t reals;
};

/// Groups of equal score, highest score first.
std::vector<TieGroup> descending_groups(std::span<const LabeledScore> scores) {
  std::vector<LabeledScore> sorted(scores.begin(), scores.end());
  for (const auto& s : sorted)
    check(std::isfinite(s.score), ErrorCode::kNonFiniteValue, "score is not finite");
  std::sort(sorted.begin(), sorted.end(),
            [](const LabeledScore& a, const LabeledScore& b) { return a.score > b.score; });
  std::vector<TieGroup> groups;
  for (const auto& s : sorted) {
    if (groups.empty() || groups.back().score != s.score) groups.push_back({s.score, 0, 0});
    (s.truth == Label::kFake ? groups.back().fakes : groups.back().reals) += 1;
  }
  return groups;
}

std::pair<std::size_t, std::size_t> class_counts(std::span<const LabeledScore> scores) {
  std::size_t fakes = 0;
  for (const auto& s : scores) fakes += s.truth == Label::kFake;
  return {scores.size() - fakes, fakes};
}

void require_both_classes(std::span<const LabeledScore> scores) {
  const auto [reals, fakes] = class_counts(scores);
  check(reals > 0 && fakes > 0, ErrorCode::kSingleClassInput,
        "need at least one real and one fake score (have " + std::to_string(reals) + " real, " +
            std::to_string(fakes) + " fake)");
}

}  // namespace

std::string_view to_string(ApConvention c) {
  return c == ApConvention::kStep ? "step" : "interpolated11";
}

std::string_view to_string(ThresholdSource s) {
  switch (s) {
    case ThresholdSource::kValidation: return "validation";
    case ThresholdSource::kOracle: return "oracle";
    case ThresholdSource::kFixed: return "fixed";
  }
  return "fixed";
}

ThresholdSource parse_threshold_source(std::string_view text) {
  if (text == "validation") return ThresholdSource::kValidation;
  if (text == "oracle") return ThresholdSource::kOracle;
  if (text == "fixed") return ThresholdSource::kFixed;
  raise(ErrorCode::kInvalidArgument, "unknown threshold source '" + std::string(text) + "'");
}

std::vector<PrPoint> pr_curve(std::span<const LabeledScore> scores) {
  const auto [reals, fakes] = class_counts(scores);
  check(fakes > 0, ErrorCode::kSingleClassInput, "PR curve needs at least one fake score");
  std::vector<PrPoint> curve;
  std::size_t tp = 0, fp = 0;
  for (const auto& g : descending_groups(scores)) {
    tp += g.fakes;
    fp += g.reals;
    curve.push_back({static_cast<double>(tp) / static_cast<double>(fakes),
                     static_cast<double>(tp) / static_cast<double>(tp + fp)});
  }
  return curve;
}

double average_precision(std::span<const LabeledScore> scores, ApConvention convention) {
  require_both_classes(scores);
  const auto curve = pr_curve(scores);
  if (convention == ApConvention::kStep) {
    double ap = 0.0, prev_recall = 0.0;
    for (const auto& p : curve) {
      ap += (p.recall - prev_recall) * p.precision;
      prev_recall = p.recall;
    }
    return ap;
  }
  double ap = 0.0;
  for (int t = 0; t <= 10; ++t) {
    const double r = t / 10.0;
    double best = 0.0;
    for (const auto& p : curve)
      if (p.recall >= r) best = std::max(best, p.precision);
    ap += best / 11.0;
  }
  return ap;
}

AccuracyBreakdown accuracy_at_threshold(std::span<const LabeledScore> scores, double threshold) {
  AccuracyBreakdown out;
  std::size_t real_ok = 0, fake_ok = 0;
  for (const auto& s : scores) {
    const bool says_fake = s.score > threshold;
    if (s.truth == Label::kFake) {
      ++out.n_fake;
      fake_ok += says_fake;
    } else {
      ++out.n_real;
      real_ok += !says_fake;
    }
  }
  if (out.n_real) out.real_accuracy = static_cast<double>(real_ok) / static_cast<double>(out.n_real);
  if (out.n_fake) out.fake_accuracy = static_cast<double>(fake_ok) / static_cast<double>(out.n_fake);
  // On balanced input the two forms are equal; the mean is used so the
  // balanced-accuracy identity holds bit for bit.
  if (out.n_real == out.n_fake && out.n_real > 0)
    out.accuracy = out.balanced();
  else if (!scores.empty())
    out.accuracy = static_cast<double>(real_ok + fake_ok) / static_cast<double>(scores.size());
  return out;
}

Calibration calibrate_threshold(std::span<const LabeledScore> scores) {
  require_both_classes(scores);
  const auto [n_real, n_fake] = class_counts(scores);

  // Ascending groups; sweeping the threshold upward moves whole groups from
  // the "fake" side (score > t) to the "real" side (score <= t).
  auto groups = descending_groups(scores);
  std::reverse(groups.begin(), groups.end());
  const double lo = groups.front().score;
  const double hi = groups.back().score;
  const double middle = lo + 0.5 * (hi - lo);

  Calibration best{lo - 1.0, -1.0};
  double best_gap = std::numeric_limits<double>::infinity();
  auto consider = [&](double t, std::size_t reals_below, std::size_t fakes_below) {
    const double real_acc = static_cast<double>(reals_below) / static_cast<double>(n_real);
    const double fake_acc = static_cast<double>(n_fake - fakes_below) / static_cast<double>(n_fake);
    const double acc = 0.5 * (real_acc + fake_acc);
    const double gap = std::abs(t - middle);
    if (acc > best.accuracy || (acc == best.accuracy && gap < best_gap)) {
      best = {t, acc};
      best_gap = gap;
    }
  };

  std::size_t reals_below = 0, fakes_below = 0;
  consider(lo - 1.0, 0, 0);
  for (std::size_t g = 0; g < groups.size(); ++g) {
    reals_below += groups[g].reals;
    fakes_below += groups[g].fakes;
    consider(groups[g].score, reals_below, fakes_below);
    if (g + 1 < groups.size()) {
      const double mid = groups[g].score + 0.5 * (groups[g + 1].score - groups[g].score);
      // Adjacent doubles have no midpoint strictly between them.
      if (mid > groups[g].score && mid < groups[g + 1].score) consider(mid, reals_below, fakes_below);
    }
  }
  consider(hi + 1.0, reals_below, fakes_below);
  return best;
}

EvalReport evaluate(std::span<const LabeledScore> scores, double threshold, ThresholdSource source,
                    ApConvention convention) {
  EvalReport r;
  r.ap = average_precision(scores, convention);
  const auto acc = accuracy_at_threshold(scores, threshold);
  r.accuracy = acc.accuracy;
  r.real_accuracy = acc.real_accuracy;
  r.fake_accuracy = acc.fake_accuracy;
  r.n_real = acc.n_real;
  r.n_fake = acc.n_fake;
  r.threshold = threshold;
  r.threshold_source = source;
  r.ap_convention = convention;
  r.pr_curve = pr_curve(scores);
  return r;
}

EvalReport oracle_evaluate(std::span<const LabeledScore> scores, ApConvention convention) {
  const auto cal = calibrate_threshold(scores);
  return evaluate(scores, cal.threshold, ThresholdSource::kOracle, convention);
}

double aggregate_map(std::span<const NamedReport> reports) {
  check(!reports.empty(), ErrorCode::kEmptyInput, "no reports to aggregate");
  double sum = 0.0;
  for (const auto& [name, r] : reports) sum += r.ap;
  return sum / static_cast<double>(reports.size());
}

double aggregate_accuracy(std::span<const NamedReport> reports) {
  check(!reports.empty(), ErrorCode::kEmptyInput, "no reports to aggregate");
  double sum = 0.0;
  for (const auto& [name, r] : reports) sum += r.accuracy;
  return sum / static_cast<double>(reports.size());
}

void to_json(nlohmann::json& j, const EvalReport& r) {
  nlohmann::json curve = nlohmann::json::array();
  for (const auto& p : r.pr_curve) curve.push_back({p.recall, p.precision});
  j = nlohmann::json{{"ap", r.ap},
                     {"accuracy", r.accuracy},
                     {"real_accuracy", r.real_accuracy},
                     {"fake_accuracy", r.fake_accuracy},
                     {"threshold", r.threshold},
                     {"threshold_source", to_string(r.threshold_source)},
                     {"ap_convention", to_string(r.ap_convention)},
                     {"pr_curve", std::move(curve)},
                     {"counts", {{"n_real", r.n_real}, {"n_fake", r.n_fake}}}};
}

void from_json(const nlohmann::json& j, EvalReport& r) {
  r.ap = j.at("ap").get<double>();
  r.accuracy = j.at("accuracy").get<double>();
  r.real_accuracy = j.at("real_accuracy").get<double>();
  r.fake_accuracy = j.at("fake_accuracy").get<double>();
  r.threshold = j.at("threshold").get<double>();
  r.threshold_source = parse_threshold_source(j.at("threshold_source").get<std::string>());
  r.ap_convention = j.value("ap_convention", std::string("step")) == "interpolated11"
                        ? ApConvention::kInterpolated11
                        : ApConvention::kStep;
  r.pr_curve.clear();
  for (const auto& p : j.at("pr_curve")) r.pr_curve.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
  r.n_real = j.at("counts").at("n_real").get<std::size_t>();
  r.n_fake = j.at("counts").at("n_fake").get<std::size_t>();
}

}  // namespace ufd
