#include "whatif/phy_sim.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>

#include "whatif/errors.hpp"

namespace whatif::phy {

namespace {

double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

cplx draw_symbol(Constellation c, Rng& rng) {
  if (c == Constellation::Bpsk) return {rng.bernoulli(0.5) ? 1.0 : -1.0, 0.0};
  const double s = 1.0 / std::numbers::sqrt2;
  return {rng.bernoulli(0.5) ? s : -s, rng.bernoulli(0.5) ? s : -s};
}

// Gray-mapped BPSK/QPSK decide per quadrant; a zero statistic counts as an error.
bool detected(Constellation c, cplx sent, cplx stat) {
  if (!(sent.real() * stat.real() > 0.0)) return false;
  return c == Constellation::Bpsk || sent.imag() * stat.imag() > 0.0;
}

double log_sum_exp(std::span<const double> v) {
  const double m = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

}  // namespace

void PhyContext::validate() const {
  if (!(snr_db >= kSnrMinDb && snr_db <= kSnrMaxDb))
    throw ContractViolation("PHY context: SNR outside [-5, 15] dB");
  if (paths < 1 || paths > kMaxPaths) throw ContractViolation("PHY context: paths outside 1..10");
}

TransmissionApp TransmissionApp::from_id(int id) {
  if (id < 0 || id > 3) throw ContractViolation("PHY app id outside 0..3");
  return {static_cast<Code>(id / 2), static_cast<Constellation>(id % 2)};
}

std::string_view TransmissionApp::code_name() const noexcept {
  return code == Code::Alamouti ? "ALAMOUTI" : "MULTIPLEXING";
}

std::string_view TransmissionApp::constellation_name() const noexcept {
  return constellation == Constellation::Bpsk ? "BPSK" : "QPSK";
}

std::string TransmissionApp::name() const {
  return std::string(code_name()) + "-" + std::string(constellation_name());
}

TransmissionApp TransmissionApp::parse(std::string_view s) {
  for (const auto& a : all_apps())
    if (a.name() == s) return a;
  throw ConfigError("unknown PHY app '" + std::string(s) + "'");
}

std::array<TransmissionApp, kAppCount> all_apps() {
  return {TransmissionApp::from_id(0), TransmissionApp::from_id(1), TransmissionApp::from_id(2),
          TransmissionApp::from_id(3)};
}

PhyContext sample_context(Rng& rng, const ContextConfig& cfg) {
  if (!(cfg.sigma_db > 0.0)) throw ContractViolation("SNR sigma must be > 0");
  PhyContext ctx;
  do {
    ctx.snr_db = rng.normal(cfg.mean_db, cfg.sigma_db);
  } while (ctx.snr_db < kSnrMinDb || ctx.snr_db > kSnrMaxDb);
  ctx.paths = static_cast<int>(rng.uniform_int(1, kMaxPaths));
  return ctx;
}

double ChannelRealization::frobenius_sq() const {
  double s = 0.0;
  for (const auto& z : h) s += std::norm(z);
  return s;
}

std::array<cplx, 2> steering_vector(double phi, double delta) {
  const double s = 1.0 / std::numbers::sqrt2;
  return {cplx(s, 0.0), s * std::polar(1.0, -2.0 * std::numbers::pi * delta * std::cos(phi))};
}

ChannelRealization build_channel(double snr_linear, int paths, Rng& rng) {
  if (!(snr_linear >= 0.0)) throw ContractViolation("linear SNR must be >= 0");
  if (paths < 1) throw ContractViolation("channel needs at least one path");
  ChannelRealization ch;
  const double amp = std::sqrt(snr_linear);
  for (int i = 0; i < paths; ++i) {
    const cplx a = rng.complex_normal(1.0 / paths);
    const auto er = steering_vector(rng.uniform(0.0, 2.0 * std::numbers::pi));
    const auto et = steering_vector(rng.uniform(0.0, 2.0 * std::numbers::pi));
    for (int r = 0; r < 2; ++r)
      for (int t = 0; t < 2; ++t) ch.h[static_cast<std::size_t>(r * 2 + t)] += amp * a * er[r] * std::conj(et[t]);
  }
  return ch;
}

ChannelRealization build_channel(const PhyContext& ctx, Rng& rng) {
  ctx.validate();
  return build_channel(db_to_linear(ctx.snr_db), ctx.paths, rng);
}

void ArqConfig::validate() const {
  if (max_retx < 1) throw ContractViolation("max_retx must be >= 1");
  if (symbols_per_packet < 1) throw ContractViolation("symbols_per_packet must be >= 1");
}

int count_symbol_errors(TransmissionApp app, const ChannelRealization& unit_channel,
                        double snr_linear, int symbols, double noise_std, Rng& rng) {
  const double amp = std::sqrt(snr_linear);
  const double p = 1.0 / std::numbers::sqrt2;  // per-antenna amplitude, total power 1
  Eigen::Matrix2cd h;
  h << unit_channel.at(0, 0), unit_channel.at(0, 1), unit_channel.at(1, 0), unit_channel.at(1, 1);

  // ZF: the statistic is pinv(H_unit) (sqrt(snr) H_unit x + n), i.e. the
  // detector output scaled by sqrt(snr), which keeps decisions identical.
  Eigen::Matrix2cd pinv = Eigen::Matrix2cd::Zero();
  if (app.code == Code::Multiplexing) {
    Eigen::JacobiSVD<Eigen::Matrix2cd> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    const double cut = 1e-10 * sv(0);
    Eigen::Vector2d inv = Eigen::Vector2d::Zero();
    for (int i = 0; i < 2; ++i)
      if (sv(i) > cut && sv(i) > 0.0) inv(i) = 1.0 / sv(i);
    pinv = svd.matrixV() * inv.asDiagonal() * svd.matrixU().adjoint();
  }

  int errors = 0;
  for (int done = 0; done < symbols; done += 2) {
    const cplx s1 = draw_symbol(app.constellation, rng);
    const cplx s2 = draw_symbol(app.constellation, rng);
    Eigen::Vector2cd n1, n2;
    for (int j = 0; j < 2; ++j) n1(j) = noise_std * rng.complex_normal(1.0);
    for (int j = 0; j < 2; ++j) n2(j) = noise_std * rng.complex_normal(1.0);
    cplx d1, d2;
    if (app.code == Code::Alamouti) {
      // Slot 1 sends (s1, s2), slot 2 sends (-s2*, s1*).
      const Eigen::Vector2cd x1(p * s1, p * s2);
      const Eigen::Vector2cd x2(-p * std::conj(s2), p * std::conj(s1));
      const Eigen::Vector2cd r1 = amp * h * x1 + n1;
      const Eigen::Vector2cd r2 = amp * h * x2 + n2;
      d1 = d2 = 0.0;
      for (int j = 0; j < 2; ++j) {
        d1 += std::conj(h(j, 0)) * r1(j) + h(j, 1) * std::conj(r2(j));
        d2 += std::conj(h(j, 1)) * r1(j) - h(j, 0) * std::conj(r2(j));
      }
    } else {
      const Eigen::Vector2cd x(p * s1, p * s2);
      const Eigen::Vector2cd est = pinv * (amp * h * x + n1);
      d1 = est(0);
      d2 = est(1);
    }
    errors += !detected(app.constellation, s1, d1);
    if (done + 1 < symbols) errors += !detected(app.constellation, s2, d2);
  }
  // Without a signal component nothing is delivered, lucky guesses included.
  return amp == 0.0 ? symbols : errors;
}

bool transmit_packet(TransmissionApp app, const PhyContext& ctx, const ArqConfig& arq, Rng& rng,
                     const LinkOverrides& ov) {
  ctx.validate();
  arq.validate();
  const double snr = ov.snr_linear.value_or(db_to_linear(ctx.snr_db));
  const double noise = ov.noise_std.value_or(1.0);
  if (!(noise >= 0.0)) throw ContractViolation("noise std must be >= 0");
  const auto unit = build_channel(1.0, ctx.paths, rng);
  return count_symbol_errors(app, unit, snr, arq.symbols_per_packet, noise, rng) == 0;
}

int transmit_arq(TransmissionApp app, const PhyContext& ctx, const ArqConfig& arq, Rng& rng,
                 const LinkOverrides& ov) {
  for (int attempt = 1; attempt < arq.max_retx; ++attempt)
    if (transmit_packet(app, ctx, arq, rng, ov)) return attempt;
  (void)transmit_packet(app, ctx, arq, rng, ov);  // last attempt; y = max_retx either way
  return arq.max_retx;
}

std::vector<double> softmax_log_probs(std::span<const double> sers, double temperature) {
  if (!(temperature > 0.0)) throw ContractViolation("temperature must be > 0");
  if (sers.empty()) throw ContractViolation("softmax over no apps");
  std::vector<double> logits;
  for (double e : sers) {
    if (!(e > 0.0 && e < 1.0)) throw ContractViolation("SER must lie in (0, 1)");
    logits.push_back(1.0 / (e * temperature));
  }
  const double z = log_sum_exp(logits);
  for (auto& l : logits) l -= z;
  return logits;
}

void PhyPolicy::validate() const {
  if (!(temperature > 0.0)) throw ContractViolation("PHY policy temperature must be > 0");
  if (!table) throw ConfigError("PHY policy has no SER table");
}

std::array<double, kAppCount> PhyPolicy::log_selection_probs(const PhyContext& ctx) const {
  validate();
  std::array<double, kAppCount> sers{};
  for (const auto& a : all_apps()) sers[static_cast<std::size_t>(a.id())] = table->ser(a, ctx);
  const auto lp = softmax_log_probs(sers, temperature);
  std::array<double, kAppCount> out{};
  std::copy(lp.begin(), lp.end(), out.begin());
  return out;
}

double PhyPolicy::log_selection_prob(TransmissionApp a, const PhyContext& ctx) const {
  return log_selection_probs(ctx)[static_cast<std::size_t>(a.id())];
}

double PhyPolicy::log_weight(TransmissionApp from, TransmissionApp to, const PhyContext& ctx) const {
  validate();
  if (from == to) return 0.0;
  return (1.0 / table->ser(to, ctx) - 1.0 / table->ser(from, ctx)) / temperature;
}

TransmissionApp PhyPolicy::select_app(const PhyContext& ctx, Rng& rng) const {
  const auto lp = log_selection_probs(ctx);
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < kAppCount; ++i) {
    acc += std::exp(lp[i]);
    if (u < acc) return TransmissionApp::from_id(static_cast<int>(i));
  }
  return TransmissionApp::from_id(static_cast<int>(kAppCount - 1));
}

PhyConditionalSampler::PhyConditionalSampler(PhyPolicy policy, ContextConfig cfg)
    : policy_(std::move(policy)), cfg_(cfg) {
  policy_.validate();
  if (!(cfg_.sigma_db > 0.0)) throw ContractViolation("SNR sigma must be > 0");
  std::vector<double> log_bin(SerTable::kBins);
  for (int b = 0; b < SerTable::kBins; ++b) {
    const double lo = SerTable::bin_low_db(b);
    log_bin[static_cast<std::size_t>(b)] = std::log(normal_cdf((lo + 1.0 - cfg_.mean_db) / cfg_.sigma_db) -
                                                    normal_cdf((lo - cfg_.mean_db) / cfg_.sigma_db));
  }
  const double log_trunc = log_sum_exp(log_bin);
  for (const auto& a : all_apps()) {
    std::vector<double> lw;
    for (int b = 0; b < SerTable::kBins; ++b)
      for (int m = 1; m <= kMaxPaths; ++m) {
        const PhyContext at{SerTable::bin_center_db(b), m};
        lw.push_back(log_bin[static_cast<std::size_t>(b)] - log_trunc - std::log(double(kMaxPaths)) +
                     policy_.log_selection_prob(a, at));
      }
    const double z = log_sum_exp(lw);
    auto& cdf = cdf_[static_cast<std::size_t>(a.id())];
    double acc = 0.0;
    for (double x : lw) cdf.push_back(acc += std::exp(x - z));
    log_marginal_[static_cast<std::size_t>(a.id())] = z;
  }
}

double PhyConditionalSampler::log_marginal(TransmissionApp a) const {
  return log_marginal_[static_cast<std::size_t>(a.id())];
}

PhyContext PhyConditionalSampler::sample(TransmissionApp a, Rng& rng) const {
  const auto& cdf = cdf_[static_cast<std::size_t>(a.id())];
  const double u = rng.uniform() * cdf.back();
  const auto cell = std::min(static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin()),
                             cdf.size() - 1);
  const int bin = static_cast<int>(cell) / kMaxPaths;
  const int m = static_cast<int>(cell) % kMaxPaths + 1;
  const double lo = SerTable::bin_low_db(bin);
  const double hi = lo + 1.0;
  // Rejection against the Gaussian density, normalized by its peak on the bin.
  const double peak_at = std::clamp(cfg_.mean_db, lo, hi);
  const auto log_dens = [&](double x) {
    const double z = (x - cfg_.mean_db) / cfg_.sigma_db;
    return -0.5 * z * z;
  };
  for (;;) {
    const double x = rng.uniform(lo, hi);
    if (std::log(rng.uniform()) <= log_dens(x) - log_dens(peak_at)) return {x, m};
  }
}

}  // namespace whatif::phy
