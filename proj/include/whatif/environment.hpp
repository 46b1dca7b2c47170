#pragma once

// Uniform view of the simulated systems the harness drives: context
// generation, the logging policy p(a|x), potential-outcome rollouts and the
// per-sample normalizers used by the metrics.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "whatif/conformal.hpp"
#include "whatif/mac_sim.hpp"
#include "whatif/phy_sim.hpp"
#include "whatif/quantile_net.hpp"
#include "whatif/rng.hpp"

namespace whatif::harness {

enum class EnvironmentKind { Mac, Phy, Synthetic };

std::string_view environment_name(EnvironmentKind k) noexcept;
EnvironmentKind parse_environment(std::string_view s);

/// Maps a flat context to per-KPI lower/upper quantile estimates.
using Predictor = std::function<conformal::IntervalSet(std::span<const double>)>;

class Environment {
 public:
  virtual ~Environment() = default;

  virtual EnvironmentKind kind() const noexcept = 0;
  std::string_view name() const noexcept { return environment_name(kind()); }
  virtual std::size_t kpi_count() const noexcept = 0;
  virtual std::size_t context_size() const noexcept = 0;
  /// Display names, indexed by app id.
  virtual std::vector<std::string> app_names() const = 0;
  int parse_app(std::string_view name) const;

  /// x ~ p(x)
  virtual std::vector<double> sample_context(Rng& rng) const = 0;
  /// x ~ p(x | a), exact.
  virtual std::vector<double> sample_context_given_app(int app, Rng& rng) const = 0;
  virtual double log_selection_prob(int app, std::span<const double> ctx) const = 0;
  /// log p(a) under p(x).
  virtual double log_marginal(int app) const = 0;
  /// log w_{from -> to}(x) = log p(to | x) - log p(from | x).
  virtual double log_weight(int from, int to, std::span<const double> ctx) const;
  int select_app(std::span<const double> ctx, Rng& rng) const;

  /// One draw of the potential outcome y_a at context x.
  virtual std::vector<double> rollout(int app, std::span<const double> ctx, Rng& rng) const = 0;

  /// epsilon_n for the normalized inefficiency.
  virtual double normalizer(std::span<const double> ctx) const = 0;
  /// Range each KPI can take at x; unbounded sets are clipped to it.
  virtual conformal::Interval kpi_domain(std::span<const double> ctx) const = 0;

  virtual qnet::Architecture default_architecture() const = 0;
  /// An analytic predictor that replaces training, if the environment has one.
  virtual Predictor fixed_predictor(int /*target_app*/) const { return {}; }

  /// Column names for dataset files.
  virtual std::vector<std::string> context_columns() const = 0;
  virtual std::vector<std::string> app_columns() const { return {"app"}; }
  virtual std::vector<std::string> kpi_columns() const = 0;
  virtual std::vector<std::string> app_cells(int app) const;
  virtual int parse_app_cells(std::span<const std::string> cells) const;
};

struct MacEnvironmentOptions {
  std::size_t users = 8;
  double temperature = 1.0;
  double max_backlog = 100.0;  // sets g(15)/K
  mac::FrameConfig frame{};
  mac::ContextDistribution contexts{};
};

struct PhyEnvironmentOptions {
  double temperature = 1.0;
  std::shared_ptr<const phy::SerTable> ser_table;
  phy::ArqConfig arq{};
  phy::ContextConfig contexts{};
};

/// x ~ N(0, 1); p(app 1 | x) = logistic(slope * x); y_1 = x + s(x) U(-1, 1) with
/// s(x) = 0.2 + 0.6 logistic(-2x), y_0 = -x + 0.5 U(-1, 1). The fixed predictor
/// for app 1 is [x - 0.5, x + 0.5], deliberately miscalibrated.
struct SyntheticEnvironmentOptions {
  double slope = 2.0;
};

std::unique_ptr<Environment> make_mac_environment(const MacEnvironmentOptions& opt);
std::unique_ptr<Environment> make_phy_environment(const PhyEnvironmentOptions& opt);
std::unique_ptr<Environment> make_synthetic_environment(const SyntheticEnvironmentOptions& opt = {});

}  // namespace whatif::harness
