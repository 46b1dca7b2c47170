#include <algorithm>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <utility>

#include "whatif/errors.hpp"
#include "whatif/experiment.hpp"
#include "whatif/numfmt.hpp"

namespace whatif::harness {

std::vector<LoggedSample> log_dataset(const Environment& env, std::size_t n, Rng& rng) {
  if (n == 0) throw ContractViolation("log_dataset needs n >= 1");
  std::vector<LoggedSample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    LoggedSample s;
    s.context = env.sample_context(rng);
    s.app = env.select_app(s.context, rng);
    s.kpi = env.rollout(s.app, s.context, rng);
    out.push_back(std::move(s));
  }
  return out;
}

Split select_and_split(std::span<const LoggedSample> data, int target_app, std::size_t n_cal, Rng& rng) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < data.size(); ++i)
    if (data[i].app == target_app) idx.push_back(i);
  if (idx.size() < n_cal + 1)
    throw InsufficientDataError("only " + std::to_string(idx.size()) + " samples logged under the target app; need " +
                                    std::to_string(n_cal + 1),
                                idx.size());
  std::shuffle(idx.begin(), idx.end(), rng.engine());
  Split s;
  for (std::size_t j = 0; j < idx.size(); ++j) (j < n_cal ? s.calibration : s.train).push_back(data[idx[j]]);
  return s;
}

std::vector<double> counterfactual_truth(const Environment& env, std::span<const double> context,
                                         int target_app, Rng& rng) {
  return env.rollout(target_app, context, rng);
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> f;
  std::stringstream ss(line);
  for (std::string cell; std::getline(ss, cell, ',');) f.emplace_back(trim(cell));
  if (!line.empty() && line.back() == ',') f.emplace_back();
  return f;
}

std::vector<std::string> header_of(const Environment& env) {
  auto h = env.context_columns();
  for (auto& c : env.app_columns()) h.push_back(c);
  for (auto& c : env.kpi_columns()) h.push_back(c);
  return h;
}

}  // namespace

void write_dataset_csv(const Environment& env, std::span<const LoggedSample> data, std::ostream& out) {
  const auto h = header_of(env);
  for (std::size_t i = 0; i < h.size(); ++i) out << (i ? "," : "") << h[i];
  out << '\n';
  for (const auto& s : data) {
    if (s.context.size() != env.context_size() || s.kpi.size() != env.kpi_count())
      throw ContractViolation("logged sample does not match the environment's shape");
    std::string sep;
    for (double v : s.context) out << std::exchange(sep, ",") << format_double(v);
    for (const auto& c : env.app_cells(s.app)) out << std::exchange(sep, ",") << c;
    for (double v : s.kpi) out << std::exchange(sep, ",") << format_double(v);
    out << '\n';
  }
  if (!out) throw IoError("failed writing dataset");
}

std::vector<LoggedSample> read_dataset_csv(const Environment& env, std::istream& in) {
  const auto h = header_of(env);
  std::string line;
  if (!std::getline(in, line) || split_csv(line) != h) throw ConfigError("dataset header does not match the environment");
  const std::size_t nc = env.context_size(), na = env.app_columns().size();
  std::vector<LoggedSample> out;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != h.size()) throw ConfigError("dataset row " + std::to_string(row) + ": wrong field count");
    LoggedSample s;
    for (std::size_t i = 0; i < nc; ++i) s.context.push_back(parse_double(f[i]));
    s.app = env.parse_app_cells(std::span(f).subspan(nc, na));
    for (std::size_t i = nc + na; i < f.size(); ++i) s.kpi.push_back(parse_double(f[i]));
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace whatif::harness
