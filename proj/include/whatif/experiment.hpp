#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "whatif/conformal.hpp"
#include "whatif/environment.hpp"
#include "whatif/quantile_net.hpp"
#include "whatif/rng.hpp"

namespace whatif::harness {

/// (x, a, y) with y the potential outcome of the logged app.
struct LoggedSample {
  std::vector<double> context;
  int app = 0;
  std::vector<double> kpi;
};

/// Contexts from p(x), apps from p(a|x), one rollout each.
std::vector<LoggedSample> log_dataset(const Environment& env, std::size_t n, Rng& rng);

struct Split {
  std::vector<LoggedSample> train;
  std::vector<LoggedSample> calibration;
};

/// Keeps the samples logged under target_app and splits them at random.
/// Throws InsufficientDataError unless more than n_cal such samples exist.
Split select_and_split(std::span<const LoggedSample> data, int target_app, std::size_t n_cal, Rng& rng);

/// Rolls the environment under target_app at the given context.
std::vector<double> counterfactual_truth(const Environment& env, std::span<const double> context,
                                         int target_app, Rng& rng);

void write_dataset_csv(const Environment& env, std::span<const LoggedSample> data, std::ostream& out);
std::vector<LoggedSample> read_dataset_csv(const Environment& env, std::istream& in);

/// Fraction of samples whose every KPI falls in its interval.
double evaluate_coverage(std::span<const conformal::PredictionSet> sets,
                         std::span<const std::vector<double>> truths);

struct Inefficiency {
  /// Mean over bounded sets only; NaN when every set is unbounded.
  double raw = 0.0;
  /// Mean over all sets, unbounded ones taking their domain width.
  double clipped = 0.0;
  std::size_t n_unbounded = 0;
};

/// mean_n (1/K) sum_k |interval_k| / eps_n.
Inefficiency evaluate_inefficiency(std::span<const conformal::PredictionSet> sets,
                                   std::span<const double> normalizers,
                                   std::span<const conformal::Interval> domains = {});

enum class Method { CCKE, NCCKE, CKE };
std::string_view method_name(Method m) noexcept;
Method parse_method(std::string_view s);

/// Additive KPI noise for the noisy-measurement experiments. Gaussian with the
/// given sigma, so the skew bound b = min{P(e >= 0), P(e <= 0)} is 1/2.
struct NoiseSpec {
  double sigma = 0.0;
  double skew_bound() const noexcept { return 0.5; }
};

/// w_hat = w (1 + u), u ~ U[-delta, delta].
struct WeightPerturbation {
  double delta = 0.0;
};

enum class SamplingMode {
  Conditional,  // exact draws from p(x | a)
  Logged,       // log from p(x) p(a|x) and keep the matching app
};

struct ExperimentConfig {
  EnvironmentKind environment = EnvironmentKind::Mac;
  double alpha = 0.2;
  double temperature = 1.0;
  std::string actual_app;
  std::string target_app;
  std::size_t n_train = 3000;
  std::size_t n_cal = 50;
  std::size_t n_test = 100;
  std::size_t n_trials = 200;
  std::uint64_t base_seed = 1;
  std::vector<Method> methods{Method::CCKE, Method::NCCKE, Method::CKE};
  std::optional<WeightPerturbation> weight_perturbation;
  std::optional<NoiseSpec> kpi_noise;

  // Environment and training knobs.
  std::size_t users = 8;
  std::string ser_table;  // path; empty builds one in memory
  int ser_n_mc = 10000;
  std::uint64_t ser_seed = 2024;
  std::size_t epochs = 200;
  bool retrain = false;
  SamplingMode sampling = SamplingMode::Conditional;
  std::size_t max_log_draws = 10'000'000;

  void validate() const;
};

struct TrialRow {
  std::string environment;
  std::string method;
  double temperature = 0.0;
  std::size_t kpi_count = 0;
  double alpha = 0.0;
  std::size_t trial = 0;
  double coverage = 0.0;
  double inefficiency_raw = 0.0;
  double inefficiency_clipped = 0.0;
  std::size_t n_unbounded = 0;
  std::uint64_t seed = 0;
};

/// Per-trial calibration facts that do not belong in the per-method rows.
struct TrialDiagnostics {
  std::size_t trial = 0;
  double ccke_median_correction = 0.0;  // over test points, +inf if mostly infinite
  double ccke_min_correction = 0.0;
  double ccke_infinite_fraction = 0.0;
  double nccke_correction = 0.0;
  double median_abs_correction_gap = 0.0;  // |CCKE - NCCKE| over test points
  double weight_error = 0.0;               // mean |w_hat - w| on calibration, normalized ratio
};

struct ExperimentReport {
  std::vector<TrialRow> rows;  // trial-major, methods in config order
  std::vector<TrialDiagnostics> diagnostics;

  std::vector<TrialRow> rows_for(std::string_view method) const;
  double mean_coverage(std::string_view method) const;
  double mean_inefficiency(std::string_view method, bool clipped = true) const;
};

/// Environment built from the config's knobs.
std::unique_ptr<Environment> make_environment(const ExperimentConfig& cfg);

/// Stream used to train the model: index 0 for the shared model, t + 1 when
/// trial t retrains.
Rng training_stream(std::uint64_t base_seed, std::size_t index);

/// Fits the quantile model on n_train target-app samples.
qnet::QuantileModel train_model(const Environment& env, const ExperimentConfig& cfg, Rng& rng);

using ProgressFn = std::function<void(std::size_t done, std::size_t total)>;

ExperimentReport run_experiment(const ExperimentConfig& cfg, const Environment& env,
                                const ProgressFn& progress = {});
ExperimentReport run_experiment(const ExperimentConfig& cfg);

}  // namespace whatif::harness
