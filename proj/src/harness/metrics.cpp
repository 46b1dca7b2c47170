#include <cmath>
#include <limits>

#include "whatif/errors.hpp"
#include "whatif/experiment.hpp"

namespace whatif::harness {

double evaluate_coverage(std::span<const conformal::PredictionSet> sets,
                         std::span<const std::vector<double>> truths) {
  if (sets.size() != truths.size()) throw ContractViolation("coverage: sets and truths differ in length");
  if (sets.empty()) throw ContractViolation("coverage over no samples");
  std::size_t covered = 0;
  for (std::size_t i = 0; i < sets.size(); ++i) covered += sets[i].covers(truths[i]);
  return static_cast<double>(covered) / static_cast<double>(sets.size());
}

Inefficiency evaluate_inefficiency(std::span<const conformal::PredictionSet> sets,
                                   std::span<const double> normalizers,
                                   std::span<const conformal::Interval> domains) {
  if (sets.size() != normalizers.size()) throw ContractViolation("inefficiency: sets and normalizers differ in length");
  if (!domains.empty() && domains.size() != sets.size())
    throw ContractViolation("inefficiency: sets and domains differ in length");
  if (sets.empty()) throw ContractViolation("inefficiency over no samples");
  Inefficiency out;
  double raw = 0.0, clipped = 0.0;
  for (std::size_t i = 0; i < sets.size(); ++i) {
    const double eps = normalizers[i];
    if (!(eps > 0.0)) throw ContractViolation("inefficiency: normalizer must be positive");
    const auto& s = sets[i];
    const double k = static_cast<double>(s.kpi_count());
    if (s.is_unbounded()) {
      if (domains.empty()) throw ContractViolation("inefficiency: unbounded set without a clipping domain");
      ++out.n_unbounded;
      clipped += domains[i].width() / eps;  // same domain for every KPI
      continue;
    }
    double w = 0.0;
    for (std::size_t j = 0; j < s.kpi_count(); ++j) w += s.width(j);
    raw += w / k / eps;
    clipped += w / k / eps;
  }
  const auto bounded = sets.size() - out.n_unbounded;
  out.raw = bounded == 0 ? std::numeric_limits<double>::quiet_NaN() : raw / static_cast<double>(bounded);
  out.clipped = clipped / static_cast<double>(sets.size());
  return out;
}

}  // namespace whatif::harness
