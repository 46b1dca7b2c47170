#include <algorithm>
#include <cmath>
#include <limits>

#include "whatif/errors.hpp"
#include "whatif/mac_sim.hpp"

namespace whatif::mac {

namespace {

double log_sum_exp(const std::vector<double>& v) {
  const double m = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

}  // namespace

ConditionalContextSampler::ConditionalContextSampler(std::size_t users, MacPolicy policy,
                                                     ContextDistribution dist)
    : users_(users), policy_(policy) {
  if (users == 0) throw ContractViolation("sampler needs K >= 1");
  policy_.validate();
  dist.validate();
  const double k = static_cast<double>(users);
  for (int b = dist.backlog_min; b <= dist.backlog_max; ++b)
    for (int c = kMinCqi; c <= kMaxCqi; ++c) pairs_.push_back({b - policy_.g(c) / k, b, c});
  std::sort(pairs_.begin(), pairs_.end(), [](const Pair& x, const Pair& y) { return x.d < y.d; });

  // Group equal slacks; the max over users depends on x only through them.
  const double total = static_cast<double>(pairs_.size());
  for (std::size_t i = 0; i < pairs_.size();) {
    std::size_t j = i;
    while (j < pairs_.size() && pairs_[j].d == pairs_[i].d) ++j;
    const double g_lo = static_cast<double>(i) / total;
    const double g_hi = static_cast<double>(j) / total;
    // P(max = v) = G^K - G_-^K = G^K (1 - (G_-/G)^K)
    const double log_tail = i == 0 ? 0.0 : std::log1p(-std::exp(k * std::log(g_lo / g_hi)));
    levels_.push_back({pairs_[i].d, i, j, k * std::log(g_hi) + log_tail});
    i = j;
  }

  for (App a : {App::RR, App::PFCA}) {
    std::vector<double> lw;
    lw.reserve(levels_.size());
    for (const auto& l : levels_)
      lw.push_back(l.log_max_prob + log_selection_prob(a, l.value, policy_.temperature));
    const double z = log_sum_exp(lw);
    auto& cdf = cumulative_[static_cast<std::size_t>(a)];
    double acc = 0.0;
    for (double x : lw) cdf.push_back(acc += std::exp(x - z));
    log_marginal_[static_cast<std::size_t>(a)] = z;
  }
}

double ConditionalContextSampler::log_marginal(App a) const {
  return log_marginal_[static_cast<std::size_t>(a)];
}

std::size_t ConditionalContextSampler::draw_level(App a, Rng& rng) const {
  const auto& cdf = cumulative_[static_cast<std::size_t>(a)];
  const double u = rng.uniform() * cdf.back();
  const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
  return std::min(static_cast<std::size_t>(it - cdf.begin()), cdf.size() - 1);
}

const ConditionalContextSampler::Pair& ConditionalContextSampler::uniform_pair(std::size_t begin,
                                                                               std::size_t end,
                                                                               Rng& rng) const {
  return pairs_[static_cast<std::size_t>(
      rng.uniform_int(static_cast<std::int64_t>(begin), static_cast<std::int64_t>(end) - 1))];
}

MacContext ConditionalContextSampler::sample(App a, Rng& rng) const {
  const Level& lv = levels_[draw_level(a, rng)];
  const double total = static_cast<double>(pairs_.size());
  const double g_hi = static_cast<double>(lv.end) / total;
  const double p_v = static_cast<double>(lv.end - lv.begin) / total;
  const double log_r = lv.begin == 0 ? -std::numeric_limits<double>::infinity()
                                     : std::log(static_cast<double>(lv.begin) / static_cast<double>(lv.end));

  MacContext ctx;
  ctx.initial_backlogs.reserve(users_);
  ctx.cqis.reserve(users_);
  bool hit = false;
  for (std::size_t left = users_; left > 0; --left) {
    const Pair* p;
    if (hit) {
      p = &uniform_pair(0, lv.end, rng);
    } else {
      // P(this user attains the max | max of `left` users is v)
      //   = p_v G^{left-1} / (G^left - G_-^left)
      const double denom = -std::expm1(static_cast<double>(left) * log_r);
      const double p_hit = left == 1 ? 1.0 : (p_v / g_hi) / denom;
      if (rng.uniform() < p_hit) {
        hit = true;
        p = &uniform_pair(lv.begin, lv.end, rng);
      } else {
        p = &uniform_pair(0, lv.begin, rng);
      }
    }
    ctx.initial_backlogs.push_back(p->backlog);
    ctx.cqis.push_back(p->cqi);
  }
  return ctx;
}

}  // namespace whatif::mac
