#pragma once

// Pinball-loss quantile regression. Two architectures share one flat
// parameter vector layout:
//   FEEDFORWARD  context -> MLP -> (lo, hi) for a single KPI
//   ATTENTION    K tokens -> attention -> shared MLP_1 -> attention -> shared
//                MLP_2 -> (lo_k, hi_k) per token; permutation equivariant.
// Hidden layers are rectified, output layers are linear. Attention
// projections carry no bias.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <variant>
#include <vector>

#include "whatif/conformal.hpp"

namespace whatif::qnet {

/// Affine maps applied before the network (per input feature, or per token
/// feature for ATTENTION) and after it (shared by both output quantiles).
/// Training runs in the scaled output units.
struct FeatureScaling {
  std::vector<double> input_offset;
  std::vector<double> input_scale;
  double output_offset = 0.0;
  double output_scale = 1.0;
};

struct FeedForwardArch {
  /// Layer widths including input and output; output must be 2.
  std::vector<std::size_t> widths;
};

struct AttentionArch {
  std::size_t token_dim = 2;
  std::size_t d_h = 10;
  std::size_t d_o = 10;
  std::size_t d_e = 10;
  /// Output widths of MLP_1's layers (input is d_o); last must equal d_e.
  std::vector<std::size_t> mlp1{10, 10, 10};
  /// Output widths of MLP_2's layers (input is d_o); last must be 2.
  std::vector<std::size_t> mlp2{10, 10, 2};
};

struct Architecture {
  std::variant<FeedForwardArch, AttentionArch> layers;
  FeatureScaling scaling;

  bool is_attention() const noexcept { return std::holds_alternative<AttentionArch>(layers); }
  std::size_t param_count() const;
  /// Throws ContractViolation on inconsistent widths or scaling lengths.
  void validate() const;

  /// (SNR dB, paths) -> latency quantiles; widths 2-10-10-5-2.
  static Architecture phy_default();
  /// Token (backlog, CQI) -> final-backlog quantiles; d_h = d_o = d_e = 10.
  static Architecture mac_default(double backlog_scale = 100.0);
};

class QuantileModel {
 public:
  QuantileModel(Architecture arch, double alpha, std::vector<double> params);

  /// Weights and biases uniform in +-1/sqrt(fan_in).
  static QuantileModel initialize(Architecture arch, double alpha, std::uint64_t seed);

  const Architecture& architecture() const noexcept { return arch_; }
  double alpha() const noexcept { return alpha_; }
  const std::vector<double>& params() const noexcept { return params_; }
  std::vector<double>& params() noexcept { return params_; }

  /// Number of KPIs produced for a context of this length.
  std::size_t kpi_count(std::size_t context_len) const;

  /// Quantile estimates in KPI units. ATTENTION contexts are laid out
  /// feature-major: [f0_1..f0_K, f1_1..f1_K, ...].
  conformal::IntervalSet forward(std::span<const double> context) const;

 private:
  Architecture arch_;
  double alpha_;
  std::vector<double> params_;
};

struct Example {
  std::vector<double> context;
  std::vector<double> kpi;
};

/// max{tau (y - q), -(1 - tau)(y - q)}.
double pinball_loss(double y, double q, double tau);

/// d pinball / dq, using slope -tau at the kink y == q.
double pinball_slope(double y, double q, double tau);

/// Summed training objective over the batch in scaled output units:
/// sum_n sum_k pinball_{alpha/2}(y, lo) + pinball_{1-alpha/2}(y, hi).
double batch_objective(const QuantileModel& model, std::span<const Example> batch);

/// Gradient of batch_objective with respect to the flat parameter vector.
std::vector<double> pinball_gradient(const QuantileModel& model, std::span<const Example> batch);

struct TrainConfig {
  std::size_t epochs = 200;
  std::size_t batch_size = 64;
  double step_size = 1e-2;
  double momentum = 0.9;
  std::uint64_t seed = 1;
};

struct TrainResult {
  QuantileModel model;
  /// Mean objective per sample and KPI on the full data, before and after training.
  double initial_loss = 0.0;
  double final_loss = 0.0;
  /// Running mean of the mini-batch objective during each epoch.
  std::vector<double> epoch_losses;
};

/// Mini-batch gradient descent with momentum. Deterministic for fixed inputs.
/// Throws TrainingDiverged when the loss stops being finite.
TrainResult train(std::span<const Example> data, const Architecture& arch, double alpha,
                  const TrainConfig& cfg);

void save_checkpoint(const QuantileModel& model, std::ostream& out);
QuantileModel load_checkpoint(std::istream& in);

}  // namespace whatif::qnet
