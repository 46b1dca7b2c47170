#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "whatif/errors.hpp"
#include "whatif/experiment.hpp"

namespace whatif::harness {

namespace {

// RNG stream families under base_seed.
constexpr std::uint64_t kTrainStream = 1;
constexpr std::uint64_t kTrialStream = 2;

double median_of(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  if (n % 2 == 1) return v[n / 2];
  const double a = v[n / 2 - 1], b = v[n / 2];
  return std::isinf(b) ? b : 0.5 * (a + b);
}

double correction_gap(double a, double b) {
  if (a == b) return 0.0;  // covers inf == inf
  return std::abs(a - b);
}

struct Draws {
  std::vector<std::vector<double>> contexts;
  std::vector<std::vector<double>> kpis;
};

Draws draw_target_samples(const Environment& env, const ExperimentConfig& cfg, int app, std::size_t n, Rng& rng) {
  Draws d;
  d.contexts.reserve(n);
  d.kpis.reserve(n);
  std::size_t attempts = 0;
  while (d.contexts.size() < n) {
    std::vector<double> x;
    if (cfg.sampling == SamplingMode::Conditional) {
      x = env.sample_context_given_app(app, rng);
    } else {
      if (++attempts > cfg.max_log_draws)
        throw InsufficientDataError("logged " + std::to_string(cfg.max_log_draws) + " samples but only " +
                                        std::to_string(d.contexts.size()) + " under the target app",
                                    d.contexts.size());
      x = env.sample_context(rng);
      if (env.select_app(x, rng) != app) continue;
    }
    auto y = env.rollout(app, x, rng);
    if (cfg.kpi_noise)
      for (auto& v : y) v += rng.normal(0.0, cfg.kpi_noise->sigma);
    d.contexts.push_back(std::move(x));
    d.kpis.push_back(std::move(y));
  }
  return d;
}

std::pair<int, int> resolve_apps(const Environment& env, const ExperimentConfig& cfg) {
  std::string target = cfg.target_app, actual = cfg.actual_app;
  if (target.empty() || actual.empty()) {
    switch (env.kind()) {
      case EnvironmentKind::Mac:
        if (target.empty()) target = "RR";
        if (actual.empty()) actual = "PFCA";
        break;
      case EnvironmentKind::Phy:
        if (target.empty()) target = "ALAMOUTI-QPSK";
        if (actual.empty()) actual = "MULTIPLEXING-QPSK";
        break;
      case EnvironmentKind::Synthetic:
        if (target.empty()) target = "B";
        if (actual.empty()) actual = "A";
        break;
    }
  }
  const int t = env.parse_app(target), a = env.parse_app(actual);
  if (t == a) throw ConfigError("actual_app and target_app must differ");
  return {a, t};
}

}  // namespace

std::string_view method_name(Method m) noexcept {
  switch (m) {
    case Method::CCKE: return "CCKE";
    case Method::NCCKE: return "NCCKE";
    case Method::CKE: return "CKE";
  }
  return "?";
}

Method parse_method(std::string_view s) {
  for (Method m : {Method::CCKE, Method::NCCKE, Method::CKE})
    if (method_name(m) == s) return m;
  throw ConfigError("unknown method '" + std::string(s) + "' (expected CCKE, NCCKE or CKE)");
}

void ExperimentConfig::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
  if (!(temperature > 0.0) || !std::isfinite(temperature)) throw ConfigError("temperature must be positive and finite");
  if (n_train == 0 || n_cal == 0 || n_test == 0 || n_trials == 0)
    throw ConfigError("n_train, n_cal, n_test and n_trials must all be >= 1");
  if (alpha < conformal::min_alpha(n_cal))
    throw PreconditionError("alpha below 1/(n_cal + 1) = " + std::to_string(conformal::min_alpha(n_cal)),
                            conformal::min_alpha(n_cal));
  if (methods.empty()) throw ConfigError("no methods selected");
  if (weight_perturbation && !(weight_perturbation->delta >= 0.0 && weight_perturbation->delta < 1.0))
    throw ConfigError("weight perturbation delta must lie in [0, 1)");
  if (kpi_noise && !(kpi_noise->sigma >= 0.0)) throw ConfigError("KPI noise sigma must be >= 0");
  if (users == 0) throw ConfigError("users must be >= 1");
  if (ser_n_mc < 2) throw ConfigError("ser_n_mc must be >= 2");
}

std::vector<TrialRow> ExperimentReport::rows_for(std::string_view method) const {
  std::vector<TrialRow> out;
  for (const auto& r : rows)
    if (r.method == method) out.push_back(r);
  return out;
}

double ExperimentReport::mean_coverage(std::string_view method) const {
  const auto r = rows_for(method);
  if (r.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (const auto& x : r) s += x.coverage;
  return s / static_cast<double>(r.size());
}

double ExperimentReport::mean_inefficiency(std::string_view method, bool clipped) const {
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& x : rows_for(method)) {
    const double v = clipped ? x.inefficiency_clipped : x.inefficiency_raw;
    if (std::isnan(v)) continue;
    s += v;
    ++n;
  }
  return n == 0 ? std::numeric_limits<double>::quiet_NaN() : s / static_cast<double>(n);
}

std::unique_ptr<Environment> make_environment(const ExperimentConfig& cfg) {
  switch (cfg.environment) {
    case EnvironmentKind::Mac: {
      MacEnvironmentOptions o;
      o.users = cfg.users;
      o.temperature = cfg.temperature;
      return make_mac_environment(o);
    }
    case EnvironmentKind::Phy: {
      PhyEnvironmentOptions o;
      o.temperature = cfg.temperature;
      if (cfg.ser_table.empty()) {
        o.ser_table = std::make_shared<const phy::SerTable>(phy::SerTable::build(cfg.ser_n_mc, cfg.ser_seed));
      } else {
        std::ifstream in(cfg.ser_table);
        if (!in) throw IoError("cannot open SER table '" + cfg.ser_table + "'");
        o.ser_table = std::make_shared<const phy::SerTable>(phy::SerTable::load_csv(in));
      }
      return make_phy_environment(o);
    }
    case EnvironmentKind::Synthetic:
      return make_synthetic_environment();
  }
  throw ConfigError("unknown environment");
}

Rng training_stream(std::uint64_t base_seed, std::size_t index) {
  return Rng::derive(base_seed, kTrainStream, index);
}

qnet::QuantileModel train_model(const Environment& env, const ExperimentConfig& cfg, Rng& rng) {
  const auto [actual, target] = resolve_apps(env, cfg);
  (void)actual;
  const auto d = draw_target_samples(env, cfg, target, cfg.n_train, rng);
  std::vector<qnet::Example> data;
  data.reserve(d.contexts.size());
  for (std::size_t i = 0; i < d.contexts.size(); ++i) data.push_back({d.contexts[i], d.kpis[i]});
  qnet::TrainConfig tc;
  tc.epochs = cfg.epochs;
  tc.seed = rng.next_u64();
  return qnet::train(data, env.default_architecture(), cfg.alpha, tc).model;
}

ExperimentReport run_experiment(const ExperimentConfig& cfg, const Environment& env, const ProgressFn& progress) {
  cfg.validate();
  const auto [actual, target] = resolve_apps(env, cfg);
  const auto names = env.app_names();

  Predictor predictor = env.fixed_predictor(target);
  std::optional<qnet::QuantileModel> model;
  const auto fit = [&](std::uint64_t index) {
    Rng tr = training_stream(cfg.base_seed, index);
    model = train_model(env, cfg, tr);
    predictor = [&m = *model](std::span<const double> x) { return m.forward(x); };
  };
  const bool trained = !predictor;
  if (trained && !cfg.retrain) fit(0);

  // log of the normalized density ratio p(x|a)/p(x|a') is log w + this.
  const double log_ratio_shift = env.log_marginal(target) - env.log_marginal(actual);

  ExperimentReport report;
  for (std::size_t trial = 0; trial < cfg.n_trials; ++trial) {
    const std::uint64_t seed = Rng::derive_seed(cfg.base_seed, kTrialStream, trial);
    Rng rng(seed);
    if (trained && cfg.retrain) fit(trial + 1);

    const auto cal = draw_target_samples(env, cfg, target, cfg.n_cal, rng);
    std::vector<double> scores, cal_logw;
    double weight_error = 0.0;
    for (std::size_t n = 0; n < cfg.n_cal; ++n) {
      scores.push_back(conformal::compute_score(predictor(cal.contexts[n]), cal.kpis[n]));
      double lw = env.log_weight(target, actual, cal.contexts[n]);
      if (cfg.weight_perturbation) {
        const double u = rng.uniform(-cfg.weight_perturbation->delta, cfg.weight_perturbation->delta);
        weight_error += std::exp(lw + log_ratio_shift) * std::abs(u);
        lw += std::log1p(u);
      }
      cal_logw.push_back(lw);
    }
    weight_error /= static_cast<double>(cfg.n_cal);

    std::vector<conformal::IntervalSet> naive;
    std::vector<std::vector<double>> truths;
    std::vector<double> test_logw, eps;
    std::vector<conformal::Interval> domains;
    for (std::size_t i = 0; i < cfg.n_test; ++i) {
      const auto x = env.sample_context_given_app(actual, rng);
      truths.push_back(counterfactual_truth(env, x, target, rng));
      naive.push_back(predictor(x));
      double lw = env.log_weight(target, actual, x);
      if (cfg.weight_perturbation)
        lw += std::log1p(rng.uniform(-cfg.weight_perturbation->delta, cfg.weight_perturbation->delta));
      test_logw.push_back(lw);
      eps.push_back(env.normalizer(x));
      domains.push_back(env.kpi_domain(x));
    }

    const conformal::SortedCalibration sorted(scores, cal_logw);
    const auto q_uniform = sorted.uniform_correction(cfg.alpha);
    std::vector<conformal::CorrectionQuantile> q_weighted;
    std::vector<double> qw_values, gaps;
    for (double lw : test_logw) {
      q_weighted.push_back(sorted.correction(lw, cfg.alpha));
      qw_values.push_back(q_weighted.back().value());
      gaps.push_back(correction_gap(q_weighted.back().value(), q_uniform.value()));
    }

    TrialDiagnostics diag;
    diag.trial = trial;
    diag.ccke_median_correction = median_of(qw_values);
    diag.ccke_min_correction = *std::min_element(qw_values.begin(), qw_values.end());
    diag.ccke_infinite_fraction =
        static_cast<double>(std::count_if(q_weighted.begin(), q_weighted.end(),
                                          [](const auto& q) { return q.is_infinite(); })) /
        static_cast<double>(cfg.n_test);
    diag.nccke_correction = q_uniform.value();
    diag.median_abs_correction_gap = median_of(gaps);
    diag.weight_error = weight_error;
    report.diagnostics.push_back(diag);

    for (Method m : cfg.methods) {
      std::vector<conformal::PredictionSet> sets;
      sets.reserve(cfg.n_test);
      for (std::size_t i = 0; i < cfg.n_test; ++i) {
        const auto q = m == Method::CCKE ? q_weighted[i] : m == Method::NCCKE ? q_uniform : conformal::CorrectionQuantile(0.0);
        sets.push_back(conformal::widen(naive[i], q, names[static_cast<std::size_t>(target)],
                                        names[static_cast<std::size_t>(actual)]));
      }
      const auto ineff = evaluate_inefficiency(sets, eps, domains);
      TrialRow row;
      row.environment = std::string(env.name());
      row.method = std::string(method_name(m));
      row.temperature = cfg.temperature;
      row.kpi_count = env.kpi_count();
      row.alpha = cfg.alpha;
      row.trial = trial;
      row.coverage = evaluate_coverage(sets, truths);
      row.inefficiency_raw = ineff.raw;
      row.inefficiency_clipped = ineff.clipped;
      row.n_unbounded = ineff.n_unbounded;
      row.seed = seed;
      report.rows.push_back(std::move(row));
    }
    if (progress) progress(trial + 1, cfg.n_trials);
  }
  return report;
}

ExperimentReport run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto env = make_environment(cfg);
  return run_experiment(cfg, *env);
}

}  // namespace whatif::harness
