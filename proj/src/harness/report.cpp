#include "whatif/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <tuple>

#include "whatif/errors.hpp"
#include "whatif/numfmt.hpp"

namespace whatif::harness {

namespace {

constexpr const char* kTrialHeader =
    "environment,method,T,K,alpha,trial,coverage,inefficiency_raw,inefficiency_clipped,n_unbounded,seed";

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> f;
  std::stringstream ss(line);
  for (std::string cell; std::getline(ss, cell, ',');) f.emplace_back(trim(cell));
  if (!line.empty() && line.back() == ',') f.emplace_back();
  return f;
}

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream out(p);
  if (!out) throw IoError("cannot write '" + p.string() + "'");
  return out;
}

}  // namespace

double interpolated_quantile(std::span<const double> sorted, double p) {
  if (sorted.empty()) return std::numeric_limits<double>::quiet_NaN();
  const double h = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = h - static_cast<double>(lo);
  if (frac == 0.0) return sorted[lo];
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

BoxStats box_stats(std::span<const double> values) {
  std::vector<double> v;
  for (double x : values)
    if (!std::isnan(x)) v.push_back(x);
  BoxStats b;
  b.n = v.size();
  if (v.empty()) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    b.median = b.mean = b.q1 = b.q3 = b.whisker_lo = b.whisker_hi = nan;
    return b;
  }
  std::sort(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += x;
  b.mean = s / static_cast<double>(v.size());
  b.median = interpolated_quantile(v, 0.5);
  b.q1 = interpolated_quantile(v, 0.25);
  b.q3 = interpolated_quantile(v, 0.75);
  const double iqr = b.q3 - b.q1;
  const double fence_lo = b.q1 - 1.5 * iqr, fence_hi = b.q3 + 1.5 * iqr;
  b.whisker_lo = b.q1;
  b.whisker_hi = b.q3;
  for (double x : v) {
    if (x < fence_lo || x > fence_hi) {
      ++b.outlier_count;
      continue;
    }
    b.whisker_lo = std::min(b.whisker_lo, x);
    b.whisker_hi = std::max(b.whisker_hi, x);
  }
  return b;
}

std::vector<AggregateRow> aggregate(std::span<const TrialRow> rows) {
  using Key = std::tuple<std::string, std::string, double, std::size_t, double>;
  std::vector<Key> keys;
  std::vector<std::vector<const TrialRow*>> groups;
  for (const auto& r : rows) {
    const Key k{r.environment, r.method, r.temperature, r.kpi_count, r.alpha};
    auto it = std::find(keys.begin(), keys.end(), k);
    if (it == keys.end()) {
      keys.push_back(k);
      groups.emplace_back();
      it = keys.end() - 1;
    }
    groups[static_cast<std::size_t>(it - keys.begin())].push_back(&r);
  }
  std::vector<AggregateRow> out;
  for (std::size_t g = 0; g < keys.size(); ++g) {
    const auto add = [&](const char* metric, double TrialRow::*field) {
      std::vector<double> v;
      for (const auto* r : groups[g]) v.push_back(r->*field);
      AggregateRow a;
      std::tie(a.environment, a.method, a.temperature, a.kpi_count, a.alpha) = keys[g];
      a.metric = metric;
      a.stats = box_stats(v);
      out.push_back(std::move(a));
    };
    add("coverage", &TrialRow::coverage);
    add("inefficiency_raw", &TrialRow::inefficiency_raw);
    add("inefficiency_clipped", &TrialRow::inefficiency_clipped);
  }
  return out;
}

void write_trial_csv(std::span<const TrialRow> rows, std::ostream& out) {
  out << kTrialHeader << '\n';
  for (const auto& r : rows)
    out << r.environment << ',' << r.method << ',' << format_double(r.temperature) << ',' << r.kpi_count << ','
        << format_double(r.alpha) << ',' << r.trial << ',' << format_double(r.coverage) << ','
        << format_double(r.inefficiency_raw) << ',' << format_double(r.inefficiency_clipped) << ','
        << r.n_unbounded << ',' << r.seed << '\n';
  if (!out) throw IoError("failed writing per-trial CSV");
}

std::vector<TrialRow> read_trial_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || trim(line) != kTrialHeader) throw ConfigError("per-trial CSV: unexpected header");
  std::vector<TrialRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 11) throw ConfigError("per-trial CSV line " + std::to_string(lineno) + ": expected 11 fields");
    TrialRow r;
    r.environment = f[0];
    r.method = f[1];
    r.temperature = parse_double(f[2]);
    r.kpi_count = static_cast<std::size_t>(parse_int(f[3]));
    r.alpha = parse_double(f[4]);
    r.trial = static_cast<std::size_t>(parse_int(f[5]));
    r.coverage = parse_double(f[6]);
    r.inefficiency_raw = parse_double(f[7]);
    r.inefficiency_clipped = parse_double(f[8]);
    r.n_unbounded = static_cast<std::size_t>(parse_int(f[9]));
    try {
      std::size_t used = 0;
      r.seed = std::stoull(f[10], &used);
      if (used != f[10].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw ConfigError("per-trial CSV line " + std::to_string(lineno) + ": bad seed '" + f[10] + "'");
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_aggregate_csv(std::span<const AggregateRow> rows, std::ostream& out) {
  out << "environment,method,T,K,alpha,metric,n,median,mean,q1,q3,whisker_lo,whisker_hi,outlier_count\n";
  for (const auto& a : rows) {
    const auto& s = a.stats;
    out << a.environment << ',' << a.method << ',' << format_double(a.temperature) << ',' << a.kpi_count << ','
        << format_double(a.alpha) << ',' << a.metric << ',' << s.n << ',' << format_double(s.median) << ','
        << format_double(s.mean) << ',' << format_double(s.q1) << ',' << format_double(s.q3) << ','
        << format_double(s.whisker_lo) << ',' << format_double(s.whisker_hi) << ',' << s.outlier_count << '\n';
  }
  if (!out) throw IoError("failed writing aggregate CSV");
}

void write_diagnostics_csv(std::span<const TrialDiagnostics> rows, std::ostream& out) {
  out << "trial,ccke_median_correction,ccke_min_correction,ccke_infinite_fraction,nccke_correction,median_abs_correction_gap,"
         "weight_error\n";
  for (const auto& d : rows)
    out << d.trial << ',' << format_double(d.ccke_median_correction) << ','
        << format_double(d.ccke_min_correction) << ','
        << format_double(d.ccke_infinite_fraction) << ',' << format_double(d.nccke_correction) << ','
        << format_double(d.median_abs_correction_gap) << ',' << format_double(d.weight_error) << '\n';
  if (!out) throw IoError("failed writing diagnostics CSV");
}

void emit_report(const ExperimentReport& report, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
  {
    auto out = open_out(dir / "trials.csv");
    write_trial_csv(report.rows, out);
  }
  {
    auto out = open_out(dir / "aggregate.csv");
    write_aggregate_csv(aggregate(report.rows), out);
  }
  auto out = open_out(dir / "diagnostics.csv");
  write_diagnostics_csv(report.diagnostics, out);
}

}  // namespace whatif::harness
