#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "whatif/rng.hpp"

namespace whatif::mac {

enum class App { RR = 0, PFCA = 1 };

std::string_view app_name(App a) noexcept;
/// Accepts "RR" / "PFCA" (case-sensitive); throws ConfigError otherwise.
App parse_app(std::string_view s);

inline constexpr int kMinCqi = 1;
inline constexpr int kMaxCqi = 15;
inline constexpr std::size_t kCqiCount = 15;

/// Spectral efficiency (bits/s/Hz) per CQI index 1..15, 4-bit CQI table of
/// LTE TS 36.213 Rel-11, Table 7.2.3-1.
inline constexpr std::array<double, kCqiCount> kSpectralEfficiency{
    0.1523, 0.2344, 0.3770, 0.6016, 0.8770, 1.1758, 1.4766, 1.9141,
    2.4063, 2.7305, 3.3223, 3.9023, 4.5234, 5.1152, 5.5547};

struct MacContext {
  std::vector<int> initial_backlogs;
  std::vector<int> cqis;

  std::size_t user_count() const noexcept { return initial_backlogs.size(); }
  void validate() const;
  /// Feature-major layout [b_1..b_K, c_1..c_K].
  std::vector<double> flatten() const;
  static MacContext unflatten(std::span<const double> flat);
};

/// Expected full-frame payload g(c), in packets, indexed by CQI - 1.
using PayloadTable = std::array<double, kCqiCount>;

/// g(c) = packets_per_efficiency * efficiency(c).
PayloadTable payload_table(double packets_per_efficiency);

struct MacPolicy {
  double temperature = 1.0;
  PayloadTable payload{};

  /// g scaled so that g(15) / K equals max_backlog.
  static MacPolicy standard(std::size_t users, double temperature, double max_backlog = 100.0);
  double g(int cqi) const;
  void validate() const;
};

struct FrameConfig {
  int resource_blocks = 50;
  /// Per-RB delivery probability indexed by CQI - 1; each entry in (0, 1].
  std::array<double, kCqiCount> success_prob = default_success_prob();

  static std::array<double, kCqiCount> default_success_prob();
  void validate() const;
};

/// Uniform integer initial backlogs on [backlog_min, backlog_max].
struct ContextDistribution {
  int backlog_min = 10;
  int backlog_max = 100;
  void validate() const;
};

MacContext generate_context(std::size_t users, Rng& rng, const ContextDistribution& dist = {});

/// max_k { b_k - g(c_k) / K }
double estimate_rr_residual(const MacContext& ctx, const MacPolicy& policy);

/// log p(a | x) with p(RR | x) = logistic(-b_hat / T); stable for any b_hat / T.
double log_selection_prob(App a, double rr_residual, double temperature);
double log_selection_prob(App a, const MacContext& ctx, const MacPolicy& policy);
double selection_prob(App a, const MacContext& ctx, const MacPolicy& policy);

/// log w_{from -> to}(x) = log p(to | x) - log p(from | x).
double log_weight(App from, App to, const MacContext& ctx, const MacPolicy& policy);

App select_app(const MacContext& ctx, const MacPolicy& policy, Rng& rng);

/// One scheduling frame. Each scheduled RB drains round(g(c_k) / F) packets
/// from user k with probability success_prob(c_k). Returns final backlogs.
std::vector<int> run_frame(App app, const MacContext& ctx, const PayloadTable& payload,
                           const FrameConfig& frame, Rng& rng);

/// Exact sampler for p(x | a) under the logged-context distribution and the
/// logistic policy. Rejection from p(x) is hopeless when p(a) is tiny, so
/// this works on the distribution of b_hat directly: draw the max from its
/// a-tilted law, then draw users sequentially conditioned on that max.
class ConditionalContextSampler {
 public:
  ConditionalContextSampler(std::size_t users, MacPolicy policy, ContextDistribution dist = {});

  MacContext sample(App a, Rng& rng) const;
  /// Marginal log p(a) under the context distribution.
  double log_marginal(App a) const;
  std::size_t users() const noexcept { return users_; }

 private:
  struct Level {
    double value;         // per-user slack d = b - g(c)/K
    std::size_t begin;    // pairs_[begin, end) share this value
    std::size_t end;
    double log_max_prob;  // log P(max_k d_k = value)
  };
  struct Pair {
    double d;
    int backlog;
    int cqi;
  };

  std::size_t users_;
  MacPolicy policy_;
  std::vector<Pair> pairs_;  // sorted by d
  std::vector<Level> levels_;
  std::array<std::vector<double>, 2> cumulative_;  // per app, normalized CDF over levels
  std::array<double, 2> log_marginal_{};

  std::size_t draw_level(App a, Rng& rng) const;
  const Pair& uniform_pair(std::size_t begin, std::size_t end, Rng& rng) const;
};

}  // namespace whatif::mac
