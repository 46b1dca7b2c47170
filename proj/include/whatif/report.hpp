#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "whatif/experiment.hpp"

namespace whatif::harness {

/// Box-plot summary: quartiles by linear interpolation between order
/// statistics, whiskers at the most extreme data within 1.5 IQR of the box.
/// NaN inputs are dropped; n counts the rest.
struct BoxStats {
  std::size_t n = 0;
  double median = 0.0;
  double mean = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
  double whisker_lo = 0.0;
  double whisker_hi = 0.0;
  std::size_t outlier_count = 0;
};

/// Quantile at level p in [0, 1] of sorted data, linear interpolation.
double interpolated_quantile(std::span<const double> sorted, double p);
BoxStats box_stats(std::span<const double> values);

struct AggregateRow {
  std::string environment;
  std::string method;
  double temperature = 0.0;
  std::size_t kpi_count = 0;
  double alpha = 0.0;
  std::string metric;  // coverage | inefficiency_raw | inefficiency_clipped
  BoxStats stats;
};

/// Groups rows by (environment, method, T, K, alpha) in first-seen order.
std::vector<AggregateRow> aggregate(std::span<const TrialRow> rows);

void write_trial_csv(std::span<const TrialRow> rows, std::ostream& out);
std::vector<TrialRow> read_trial_csv(std::istream& in);
void write_aggregate_csv(std::span<const AggregateRow> rows, std::ostream& out);
void write_diagnostics_csv(std::span<const TrialDiagnostics> rows, std::ostream& out);

/// Writes trials.csv, aggregate.csv and diagnostics.csv into `dir`, creating it.
void emit_report(const ExperimentReport& report, const std::filesystem::path& dir);

}  // namespace whatif::harness
