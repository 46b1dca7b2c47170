#include "whatif/mac_sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "whatif/errors.hpp"

namespace whatif::mac {

namespace {

// log(1 + e^x) without overflow.
double softplus(double x) {
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

constexpr double kPfFloor = 1e-6;
constexpr double kPfSmoothing = 0.1;

}  // namespace

std::string_view app_name(App a) noexcept { return a == App::RR ? "RR" : "PFCA"; }

App parse_app(std::string_view s) {
  if (s == "RR") return App::RR;
  if (s == "PFCA") return App::PFCA;
  throw ConfigError("unknown MAC app '" + std::string(s) + "' (expected RR or PFCA)");
}

void MacContext::validate() const {
  if (initial_backlogs.empty()) throw ContractViolation("MAC context needs at least one user");
  if (initial_backlogs.size() != cqis.size())
    throw ContractViolation("MAC context: backlog and CQI vectors differ in length");
  for (int b : initial_backlogs)
    if (b < 0) throw ContractViolation("MAC context: negative backlog");
  for (int c : cqis)
    if (c < kMinCqi || c > kMaxCqi) throw ContractViolation("MAC context: CQI outside 1..15");
}

std::vector<double> MacContext::flatten() const {
  std::vector<double> out;
  out.reserve(2 * user_count());
  for (int b : initial_backlogs) out.push_back(b);
  for (int c : cqis) out.push_back(c);
  return out;
}

MacContext MacContext::unflatten(std::span<const double> flat) {
  if (flat.empty() || flat.size() % 2 != 0)
    throw ContractViolation("MAC context: flat length must be 2K with K >= 1");
  const std::size_t k = flat.size() / 2;
  MacContext ctx;
  for (std::size_t i = 0; i < k; ++i) {
    ctx.initial_backlogs.push_back(static_cast<int>(std::lround(flat[i])));
    ctx.cqis.push_back(static_cast<int>(std::lround(flat[k + i])));
  }
  ctx.validate();
  return ctx;
}

PayloadTable payload_table(double packets_per_efficiency) {
  if (!(packets_per_efficiency >= 0.0) || !std::isfinite(packets_per_efficiency))
    throw ContractViolation("payload scale must be finite and nonnegative");
  PayloadTable t{};
  for (std::size_t i = 0; i < kCqiCount; ++i) t[i] = packets_per_efficiency * kSpectralEfficiency[i];
  return t;
}

MacPolicy MacPolicy::standard(std::size_t users, double temperature, double max_backlog) {
  if (users == 0) throw ContractViolation("MAC policy needs K >= 1");
  MacPolicy p;
  p.temperature = temperature;
  p.payload = payload_table(static_cast<double>(users) * max_backlog / kSpectralEfficiency.back());
  p.validate();
  return p;
}

double MacPolicy::g(int cqi) const {
  if (cqi < kMinCqi || cqi > kMaxCqi) throw ContractViolation("CQI outside 1..15");
  return payload[static_cast<std::size_t>(cqi - 1)];
}

void MacPolicy::validate() const {
  if (!(temperature > 0.0)) throw ContractViolation("MAC policy temperature must be > 0");
  for (std::size_t i = 0; i < kCqiCount; ++i) {
    if (!std::isfinite(payload[i]) || payload[i] < 0.0)
      throw ContractViolation("payload table entries must be finite and nonnegative");
    if (i > 0 && payload[i] < payload[i - 1])
      throw ContractViolation("payload table must be nondecreasing in CQI");
  }
}

std::array<double, kCqiCount> FrameConfig::default_success_prob() {
  std::array<double, kCqiCount> p{};
  for (std::size_t i = 0; i < kCqiCount; ++i) p[i] = 0.9 + 0.1 * static_cast<double>(i) / 14.0;
  return p;
}

void FrameConfig::validate() const {
  if (resource_blocks < 1) throw ContractViolation("frame needs at least one resource block");
  for (double p : success_prob)
    if (!(p > 0.0 && p <= 1.0)) throw ContractViolation("per-RB success probability must lie in (0, 1]");
}

void ContextDistribution::validate() const {
  if (backlog_min < 0 || backlog_max < backlog_min)
    throw ContractViolation("backlog range must satisfy 0 <= min <= max");
}

MacContext generate_context(std::size_t users, Rng& rng, const ContextDistribution& dist) {
  if (users == 0) throw ContractViolation("generate_context needs K >= 1");
  dist.validate();
  MacContext ctx;
  ctx.initial_backlogs.resize(users);
  ctx.cqis.resize(users);
  for (std::size_t k = 0; k < users; ++k) {
    ctx.initial_backlogs[k] = static_cast<int>(rng.uniform_int(dist.backlog_min, dist.backlog_max));
    ctx.cqis[k] = static_cast<int>(rng.uniform_int(kMinCqi, kMaxCqi));
  }
  return ctx;
}

double estimate_rr_residual(const MacContext& ctx, const MacPolicy& policy) {
  ctx.validate();
  const double k = static_cast<double>(ctx.user_count());
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < ctx.user_count(); ++i)
    best = std::max(best, ctx.initial_backlogs[i] - policy.g(ctx.cqis[i]) / k);
  return best;
}

double log_selection_prob(App a, double rr_residual, double temperature) {
  if (!(temperature > 0.0)) throw ContractViolation("temperature must be > 0");
  const double z = rr_residual / temperature;
  return a == App::RR ? -softplus(z) : -softplus(-z);
}

double log_selection_prob(App a, const MacContext& ctx, const MacPolicy& policy) {
  return log_selection_prob(a, estimate_rr_residual(ctx, policy), policy.temperature);
}

double selection_prob(App a, const MacContext& ctx, const MacPolicy& policy) {
  return std::exp(log_selection_prob(a, ctx, policy));
}

double log_weight(App from, App to, const MacContext& ctx, const MacPolicy& policy) {
  if (from == to) return 0.0;
  // log p(PFCA)/p(RR) = b_hat / T exactly; the reverse is its negation.
  const double z = estimate_rr_residual(ctx, policy) / policy.temperature;
  return to == App::PFCA ? z : -z;
}

App select_app(const MacContext& ctx, const MacPolicy& policy, Rng& rng) {
  return rng.uniform() < selection_prob(App::RR, ctx, policy) ? App::RR : App::PFCA;
}

std::vector<int> run_frame(App app, const MacContext& ctx, const PayloadTable& payload,
                           const FrameConfig& frame, Rng& rng) {
  ctx.validate();
  frame.validate();
  const std::size_t k = ctx.user_count();
  const double f = frame.resource_blocks;
  std::vector<int> backlog = ctx.initial_backlogs;
  std::vector<int> per_rb(k);
  std::vector<double> success(k);
  for (std::size_t i = 0; i < k; ++i) {
    const auto c = static_cast<std::size_t>(ctx.cqis[i] - 1);
    per_rb[i] = static_cast<int>(std::lround(payload[c] / f));
    success[i] = frame.success_prob[c];
  }
  auto serve = [&](std::size_t i) {
    if (backlog[i] == 0 || !rng.bernoulli(success[i])) return 0;
    const int d = std::min(backlog[i], per_rb[i]);
    backlog[i] -= d;
    return d;
  };

  if (app == App::RR) {
    // Cyclic in index order from a random start, empty queues keep their turn.
    const auto start = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(k) - 1));
    for (int rb = 0; rb < frame.resource_blocks; ++rb) serve((start + static_cast<std::size_t>(rb)) % k);
    return backlog;
  }

  std::vector<double> avg(k, kPfFloor);
  for (int rb = 0; rb < frame.resource_blocks; ++rb) {
    std::size_t pick = k;
    double best = -1.0;
    for (std::size_t i = 0; i < k; ++i) {
      if (backlog[i] == 0) continue;
      const double metric = per_rb[i] / std::max(avg[i], kPfFloor);
      if (metric > best) {
        best = metric;
        pick = i;
      }
    }
    if (pick == k) break;
    const int delivered = serve(pick);
    for (std::size_t i = 0; i < k; ++i)
      avg[i] = (1.0 - kPfSmoothing) * avg[i] + kPfSmoothing * (i == pick ? delivered : 0);
  }
  return backlog;
}

}  // namespace whatif::mac
