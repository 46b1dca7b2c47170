#include "whatif/conformal.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace whatif::conformal {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_alpha(double alpha, std::size_t n_cal) {
  if (n_cal == 0) {
    throw ContractViolation("calibration set is empty");
  }
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw ContractViolation("alpha must lie in (0, 1)");
  }
  const double a_min = min_alpha(n_cal);
  if (alpha < a_min * (1.0 - kThresholdSlack)) {
    std::ostringstream msg;
    msg << "alpha=" << alpha << " is below the minimum feasible level 1/(N_cal+1)=" << a_min
        << " for N_cal=" << n_cal;
    throw PreconditionError(msg.str(), a_min);
  }
}

bool reaches(double cumulative, double threshold) {
  return cumulative >= threshold * (1.0 - kThresholdSlack);
}

}  // namespace

IntervalSet::IntervalSet(std::vector<double> lo_, std::vector<double> hi_)
    : lo(std::move(lo_)), hi(std::move(hi_)) {
  if (lo.size() != hi.size() || lo.empty()) {
    throw ContractViolation("IntervalSet: lo/hi must be non-empty and of equal length");
  }
}

PredictionSet::PredictionSet(std::vector<Interval> intervals, CorrectionQuantile correction,
                             std::string target_app, std::string actual_app)
    : intervals_(std::move(intervals)),
      correction_(correction),
      target_app_(std::move(target_app)),
      actual_app_(std::move(actual_app)),
      kpi_count_(intervals_.size()) {}

PredictionSet PredictionSet::unbounded(std::size_t kpi_count, std::string target_app,
                                       std::string actual_app) {
  PredictionSet s;
  s.correction_ = CorrectionQuantile::infinite();
  s.target_app_ = std::move(target_app);
  s.actual_app_ = std::move(actual_app);
  s.kpi_count_ = kpi_count;
  s.unbounded_ = true;
  return s;
}

bool PredictionSet::covers(std::span<const double> y) const {
  if (y.size() != kpi_count_) {
    throw ContractViolation("PredictionSet::covers: KPI length mismatch");
  }
  if (unbounded_) return true;
  for (std::size_t k = 0; k < y.size(); ++k) {
    if (!intervals_[k].contains(y[k])) return false;
  }
  return true;
}

double PredictionSet::width(std::size_t k) const {
  if (k >= kpi_count_) throw ContractViolation("PredictionSet::width: KPI index out of range");
  return unbounded_ ? kInf : intervals_[k].width();
}

double compute_score(const IntervalSet& intervals, std::span<const double> y) {
  if (y.size() != intervals.kpi_count() || y.empty()) {
    throw ContractViolation("compute_score: KPI vector length does not match the interval set");
  }
  double s = -kInf;
  for (std::size_t k = 0; k < y.size(); ++k) {
    s = std::max({s, intervals.lo[k] - y[k], y[k] - intervals.hi[k]});
  }
  return s;
}

WeightedScoreDistribution compute_weight_probabilities(std::span<const double> scores,
                                                       std::span<const double> cal_weights,
                                                       double test_weight) {
  if (scores.size() != cal_weights.size()) {
    throw ContractViolation("compute_weight_probabilities: scores/weights length mismatch");
  }
  if (scores.empty()) throw ContractViolation("compute_weight_probabilities: no calibration data");
  double total = test_weight;
  for (double w : cal_weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw ContractViolation("compute_weight_probabilities: weights must be finite and >= 0");
    }
    total += w;
  }
  if (!(test_weight >= 0.0) || !std::isfinite(test_weight)) {
    throw ContractViolation("compute_weight_probabilities: weights must be finite and >= 0");
  }
  if (total <= 0.0) {
    throw DegeneratePolicyError(
        "all density-ratio weights are zero: the target app is never selected in these contexts");
  }
  WeightedScoreDistribution d;
  d.scores.assign(scores.begin(), scores.end());
  d.point_probs.reserve(scores.size());
  for (double w : cal_weights) d.point_probs.push_back(w / total);
  d.infinity_prob = test_weight / total;
  return d;
}

WeightedScoreDistribution compute_weight_probabilities_log(std::span<const double> scores,
                                                           std::span<const double> cal_log_weights,
                                                           double test_log_weight) {
  if (scores.size() != cal_log_weights.size()) {
    throw ContractViolation("compute_weight_probabilities_log: scores/weights length mismatch");
  }
  if (scores.empty()) {
    throw ContractViolation("compute_weight_probabilities_log: no calibration data");
  }
  double m = test_log_weight;
  for (double lw : cal_log_weights) m = std::max(m, lw);
  if (m == -kInf) {
    throw DegeneratePolicyError(
        "all density-ratio weights are zero: the target app is never selected in these contexts");
  }
  if (std::isnan(m) || m == kInf) {
    throw ContractViolation("compute_weight_probabilities_log: log-weights must be < +inf");
  }
  std::vector<double> w;
  w.reserve(scores.size());
  for (double lw : cal_log_weights) w.push_back(std::exp(lw - m));
  return compute_weight_probabilities(scores, w, std::exp(test_log_weight - m));
}

double quantile_level(double alpha, std::size_t n_cal) {
  const double n = static_cast<double>(n_cal);
  return (1.0 - alpha) * (n + 1.0) / n;
}

CorrectionQuantile weighted_quantile(const WeightedScoreDistribution& dist, double alpha) {
  if (dist.point_probs.size() != dist.scores.size()) {
    throw ContractViolation("weighted_quantile: probabilities/scores length mismatch");
  }
  check_alpha(alpha, dist.size());
  const double threshold = quantile_level(alpha, dist.size());

  std::vector<std::size_t> order(dist.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return dist.scores[a] < dist.scores[b]; });

  double cumulative = 0.0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    cumulative += dist.point_probs[order[i]];
    // Ties share mass: only test once the last copy of a value is included.
    const bool last_of_value =
        i + 1 == order.size() || dist.scores[order[i + 1]] != dist.scores[order[i]];
    if (last_of_value && reaches(cumulative, threshold)) {
      return CorrectionQuantile(dist.scores[order[i]]);
    }
  }
  return CorrectionQuantile::infinite();
}

PredictionSet widen(const IntervalSet& naive, CorrectionQuantile q, std::string target_app,
                    std::string actual_app) {
  if (q.is_infinite()) {
    return PredictionSet::unbounded(naive.kpi_count(), std::move(target_app),
                                    std::move(actual_app));
  }
  std::vector<Interval> out(naive.kpi_count());
  for (std::size_t k = 0; k < out.size(); ++k) {
    out[k] = {naive.lo[k] - q.value(), naive.hi[k] + q.value()};
  }
  return PredictionSet(std::move(out), q, std::move(target_app), std::move(actual_app));
}

PredictionSet ccke_prediction_set(const IntervalSet& model_intervals, const CalibrationScores& cal,
                                  std::span<const double> cal_weights, double test_weight,
                                  double alpha) {
  const auto dist = compute_weight_probabilities(cal.scores, cal_weights, test_weight);
  return widen(model_intervals, weighted_quantile(dist, alpha));
}

PredictionSet ccke_prediction_set_log(const IntervalSet& model_intervals,
                                      const CalibrationScores& cal,
                                      std::span<const double> cal_log_weights,
                                      double test_log_weight, double alpha) {
  const auto dist = compute_weight_probabilities_log(cal.scores, cal_log_weights, test_log_weight);
  return widen(model_intervals, weighted_quantile(dist, alpha));
}

PredictionSet nccke_prediction_set(const IntervalSet& model_intervals, const CalibrationScores& cal,
                                   double alpha) {
  if (cal.scores.empty()) throw ContractViolation("nccke_prediction_set: N_cal must be >= 1");
  const std::vector<double> ones(cal.scores.size(), 1.0);
  return ccke_prediction_set(model_intervals, cal, ones, 1.0, alpha);
}

PredictionSet cke_prediction_set(const IntervalSet& model_intervals) {
  return widen(model_intervals, CorrectionQuantile(0.0));
}

SortedCalibration::SortedCalibration(std::span<const double> scores,
                                     std::span<const double> cal_log_weights) {
  if (scores.size() != cal_log_weights.size()) {
    throw ContractViolation("SortedCalibration: scores/weights length mismatch");
  }
  if (scores.empty()) throw ContractViolation("SortedCalibration: no calibration data");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  max_log_ = -kInf;
  for (double lw : cal_log_weights) {
    if (std::isnan(lw) || lw == kInf) {
      throw ContractViolation("SortedCalibration: log-weights must be < +inf");
    }
    max_log_ = std::max(max_log_, lw);
  }
  sorted_scores_.reserve(scores.size());
  prefix_.reserve(scores.size());
  double acc = 0.0;
  for (std::size_t i : order) {
    sorted_scores_.push_back(scores[i]);
    acc += max_log_ == -kInf ? 0.0 : std::exp(cal_log_weights[i] - max_log_);
    prefix_.push_back(acc);
  }
}

CorrectionQuantile SortedCalibration::correction(double test_log_weight, double alpha) const {
  check_alpha(alpha, size());
  if (std::isnan(test_log_weight)) throw ContractViolation("test log-weight is NaN");
  const double total_cal = prefix_.back();
  if (total_cal == 0.0) {
    if (test_log_weight == -kInf) {
      throw DegeneratePolicyError(
          "all density-ratio weights are zero: the target app is never selected in these "
          "contexts");
    }
    return CorrectionQuantile::infinite();
  }
  const double rel = test_log_weight - max_log_;
  // exp(rel) overflows: the test atom carries all the mass.
  if (rel > 700.0) return CorrectionQuantile::infinite();
  const double total = total_cal + std::exp(rel);
  const double needed = quantile_level(alpha, size()) * total * (1.0 - kThresholdSlack);
  const auto it = std::lower_bound(prefix_.begin(), prefix_.end(), needed);
  if (it == prefix_.end()) return CorrectionQuantile::infinite();
  return CorrectionQuantile(sorted_scores_[static_cast<std::size_t>(it - prefix_.begin())]);
}

CorrectionQuantile SortedCalibration::uniform_correction(double alpha) const {
  check_alpha(alpha, size());
  const double n = static_cast<double>(size());
  const double needed = quantile_level(alpha, size()) * (n + 1.0) * (1.0 - kThresholdSlack);
  const double k = std::ceil(needed);
  if (k > n) return CorrectionQuantile::infinite();
  return CorrectionQuantile(sorted_scores_[static_cast<std::size_t>(std::max(k, 1.0)) - 1]);
}

}  // namespace whatif::conformal
