#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "network.hpp"
#include "whatif/errors.hpp"
#include "whatif/quantile_net.hpp"

namespace whatif::qnet {

namespace {

void check_tau(double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw ContractViolation("pinball level tau must lie in (0, 1)");
}

// Objective and (optionally) gradient over a batch, sharing one forward pass.
double objective_and_gradient(const detail::Layout& layout, const QuantileModel& model,
                              std::span<const Example> batch, std::vector<double>* grad) {
  const auto& arch = model.architecture();
  const double lo_tau = model.alpha() / 2.0;
  const double hi_tau = 1.0 - model.alpha() / 2.0;
  const double off = arch.scaling.output_offset;
  const double inv_scale = 1.0 / arch.scaling.output_scale;

  double total = 0.0;
  detail::Trace trace;
  for (const auto& ex : batch) {
    const auto x = detail::scaled_input(arch, ex.context);
    const auto out = detail::run_forward(layout, model.params(), x, grad ? &trace : nullptr);
    if (static_cast<std::size_t>(out.cols()) != ex.kpi.size()) {
      throw ContractViolation("training example KPI length does not match the model output");
    }
    detail::Mat d_out(2, out.cols());
    for (Eigen::Index k = 0; k < out.cols(); ++k) {
      const double y = (ex.kpi[static_cast<std::size_t>(k)] - off) * inv_scale;
      total += pinball_loss(y, out(0, k), lo_tau) + pinball_loss(y, out(1, k), hi_tau);
      d_out(0, k) = pinball_slope(y, out(0, k), lo_tau);
      d_out(1, k) = pinball_slope(y, out(1, k), hi_tau);
    }
    if (grad) detail::run_backward(layout, model.params(), trace, d_out, *grad);
  }
  return total;
}

std::size_t kpi_total(std::span<const Example> data) {
  std::size_t n = 0;
  for (const auto& ex : data) n += ex.kpi.size();
  return n;
}

}  // namespace

double pinball_loss(double y, double q, double tau) {
  check_tau(tau);
  const double r = y - q;
  return std::max(tau * r, -(1.0 - tau) * r);
}

double pinball_slope(double y, double q, double tau) {
  check_tau(tau);
  return y >= q ? -tau : 1.0 - tau;
}

double batch_objective(const QuantileModel& model, std::span<const Example> batch) {
  const detail::Layout layout(model.architecture());
  return objective_and_gradient(layout, model, batch, nullptr);
}

std::vector<double> pinball_gradient(const QuantileModel& model, std::span<const Example> batch) {
  if (batch.empty()) throw ContractViolation("pinball_gradient: empty batch");
  const detail::Layout layout(model.architecture());
  std::vector<double> g(layout.param_count(), 0.0);
  objective_and_gradient(layout, model, batch, &g);
  return g;
}

TrainResult train(std::span<const Example> data, const Architecture& arch, double alpha,
                  const TrainConfig& cfg) {
  if (data.empty()) throw ContractViolation("train: empty training split");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ContractViolation("train: alpha must lie in (0, 1)");
  if (cfg.batch_size == 0 || !(cfg.step_size > 0.0) || cfg.momentum < 0.0) {
    throw ContractViolation("train: batch size and step size must be positive");
  }
  const detail::Layout layout(arch);
  TrainResult result{QuantileModel::initialize(arch, alpha, cfg.seed), 0.0, 0.0, {}};
  QuantileModel& model = result.model;

  const double norm = 1.0 / static_cast<double>(kpi_total(data));
  result.initial_loss = objective_and_gradient(layout, model, data, nullptr) * norm;
  if (!std::isfinite(result.initial_loss)) {
    throw TrainingDiverged("training loss is not finite at initialization", 0);
  }

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 shuffle_gen(cfg.seed ^ 0x5eed5eed5eed5eedULL);
  std::vector<double> velocity(layout.param_count(), 0.0);
  std::vector<double> grad(layout.param_count());
  std::vector<Example> batch;
  batch.reserve(cfg.batch_size);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_gen);
    double running = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      batch.clear();
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      for (std::size_t i = start; i < stop; ++i) batch.push_back(data[order[i]]);
      std::fill(grad.begin(), grad.end(), 0.0);
      const double loss = objective_and_gradient(layout, model, batch, &grad);
      if (!std::isfinite(loss)) {
        std::ostringstream msg;
        msg << "training diverged at epoch " << epoch;
        throw TrainingDiverged(msg.str(), epoch);
      }
      running += loss;
      const double scale = 1.0 / static_cast<double>(kpi_total(batch));
      auto& p = model.params();
      for (std::size_t i = 0; i < p.size(); ++i) {
        velocity[i] = cfg.momentum * velocity[i] - cfg.step_size * grad[i] * scale;
        p[i] += velocity[i];
      }
    }
    result.epoch_losses.push_back(running * norm);
  }
  result.final_loss = objective_and_gradient(layout, model, data, nullptr) * norm;
  if (!std::isfinite(result.final_loss)) {
    throw TrainingDiverged("training loss is not finite after the last epoch", cfg.epochs);
  }
  return result;
}

}  // namespace whatif::qnet
