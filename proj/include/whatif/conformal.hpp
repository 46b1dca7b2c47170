#pragma once

// Calibration half of counterfactual conformal KPI estimation: nonconformity
// scores, density-ratio weighting, the weighted correction quantile, and the
// three interval constructions (CCKE, NCCKE, CKE).

#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "whatif/errors.hpp"

namespace whatif::conformal {

/// Per-KPI lower/upper quantile estimates from the regressor. lo[k] > hi[k]
/// is allowed (quantile crossing).
struct IntervalSet {
  std::vector<double> lo;
  std::vector<double> hi;

  IntervalSet() = default;
  IntervalSet(std::vector<double> lo_, std::vector<double> hi_);

  std::size_t kpi_count() const noexcept { return lo.size(); }
};

struct CalibrationScores {
  std::vector<double> scores;
};

/// sum_n p_n delta_{s_n} + p_inf delta_{inf}.
struct WeightedScoreDistribution {
  std::vector<double> scores;
  std::vector<double> point_probs;
  double infinity_prob = 0.0;

  std::size_t size() const noexcept { return scores.size(); }
};

class CorrectionQuantile {
 public:
  constexpr CorrectionQuantile() = default;
  constexpr explicit CorrectionQuantile(double v) : value_(v) {}
  static constexpr CorrectionQuantile infinite() {
    return CorrectionQuantile(std::numeric_limits<double>::infinity());
  }

  constexpr bool is_infinite() const noexcept {
    return value_ == std::numeric_limits<double>::infinity();
  }
  /// +inf when infinite.
  constexpr double value() const noexcept { return value_; }

  friend constexpr bool operator==(CorrectionQuantile, CorrectionQuantile) = default;

 private:
  double value_ = 0.0;
};

struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  bool empty() const noexcept { return hi < lo; }
  double width() const noexcept { return empty() ? 0.0 : hi - lo; }
  bool contains(double y) const noexcept { return lo <= y && y <= hi; }
};

class PredictionSet {
 public:
  PredictionSet() = default;
  PredictionSet(std::vector<Interval> intervals, CorrectionQuantile correction,
                std::string target_app = {}, std::string actual_app = {});
  /// Covers all of R^K.
  static PredictionSet unbounded(std::size_t kpi_count, std::string target_app = {},
                                 std::string actual_app = {});

  bool is_unbounded() const noexcept { return unbounded_; }
  std::size_t kpi_count() const noexcept { return kpi_count_; }
  /// Only meaningful for bounded sets.
  const std::vector<Interval>& intervals() const noexcept { return intervals_; }
  CorrectionQuantile correction() const noexcept { return correction_; }
  const std::string& target_app() const noexcept { return target_app_; }
  const std::string& actual_app() const noexcept { return actual_app_; }

  /// Joint coverage: every KPI inside its interval.
  bool covers(std::span<const double> y) const;
  /// Width of KPI k; +inf for an unbounded set, 0 for an empty interval.
  double width(std::size_t k) const;

 private:
  std::vector<Interval> intervals_;
  CorrectionQuantile correction_;
  std::string target_app_;
  std::string actual_app_;
  std::size_t kpi_count_ = 0;
  bool unbounded_ = false;
};

/// max_k max{lo[k] - y[k], y[k] - hi[k]}.
double compute_score(const IntervalSet& intervals, std::span<const double> y);

/// Normalizes raw density-ratio weights into p_n and p_inf.
/// Throws DegeneratePolicyError when every weight is zero.
WeightedScoreDistribution compute_weight_probabilities(std::span<const double> scores,
                                                       std::span<const double> cal_weights,
                                                       double test_weight);

/// Same normalization from log-weights; stays finite for policies whose
/// ratios overflow a double (sharp softmax/logistic selection).
WeightedScoreDistribution compute_weight_probabilities_log(std::span<const double> scores,
                                                           std::span<const double> cal_log_weights,
                                                           double test_log_weight);

/// Context-generic front end: weight_fn(context) -> w >= 0.
template <class Context, class WeightFn>
WeightedScoreDistribution compute_weight_probabilities(WeightFn&& weight_fn,
                                                       std::span<const Context> cal_contexts,
                                                       std::span<const double> scores,
                                                       const Context& test_context) {
  if (cal_contexts.size() != scores.size()) {
    throw ContractViolation("compute_weight_probabilities: contexts/scores length mismatch");
  }
  std::vector<double> w;
  w.reserve(cal_contexts.size());
  for (const auto& c : cal_contexts) w.push_back(weight_fn(c));
  return compute_weight_probabilities(scores, w, weight_fn(test_context));
}

/// Smallest feasible miscoverage level for n_cal calibration points.
inline double min_alpha(std::size_t n_cal) { return 1.0 / (static_cast<double>(n_cal) + 1.0); }

/// Threshold (1 - alpha)(N + 1) / N that the cumulative weighted mass must reach.
double quantile_level(double alpha, std::size_t n_cal);

/// Relative slack applied when comparing cumulative mass against the
/// threshold, so representation error in p_n cannot flip an exact tie.
inline constexpr double kThresholdSlack = 1e-12;

/// inf{ s : sum_n p_n 1(s_n <= s) + p_inf 1(inf <= s) >= (1-alpha)(N+1)/N }.
CorrectionQuantile weighted_quantile(const WeightedScoreDistribution& dist, double alpha);

/// Widens the naive intervals by q on each side.
PredictionSet widen(const IntervalSet& naive, CorrectionQuantile q, std::string target_app = {},
                    std::string actual_app = {});

PredictionSet ccke_prediction_set(const IntervalSet& model_intervals, const CalibrationScores& cal,
                                  std::span<const double> cal_weights, double test_weight,
                                  double alpha);

PredictionSet ccke_prediction_set_log(const IntervalSet& model_intervals,
                                      const CalibrationScores& cal,
                                      std::span<const double> cal_log_weights,
                                      double test_log_weight, double alpha);

PredictionSet nccke_prediction_set(const IntervalSet& model_intervals, const CalibrationScores& cal,
                                   double alpha);

PredictionSet cke_prediction_set(const IntervalSet& model_intervals);

/// Calibration scores pre-sorted with log-weight prefix sums, so the CCKE
/// correction for many test contexts costs O(log N) each. Produces exactly the
/// correction weighted_quantile() would for the same inputs up to the
/// summation order of the weights.
class SortedCalibration {
 public:
  SortedCalibration(std::span<const double> scores, std::span<const double> cal_log_weights);

  std::size_t size() const noexcept { return sorted_scores_.size(); }
  CorrectionQuantile correction(double test_log_weight, double alpha) const;
  /// Unweighted (NCCKE) correction.
  CorrectionQuantile uniform_correction(double alpha) const;

 private:
  std::vector<double> sorted_scores_;
  std::vector<double> prefix_;  // cumulative exp(logw - max_log_) in sorted order
  double max_log_ = 0.0;
};

}  // namespace whatif::conformal
