#pragma once

#include <array>
#include <complex>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "whatif/rng.hpp"

namespace whatif::phy {

using cplx = std::complex<double>;

struct PhyContext {
  double snr_db = 0.0;
  int paths = 1;
  void validate() const;
};

inline constexpr double kSnrMinDb = -5.0;
inline constexpr double kSnrMaxDb = 15.0;
inline constexpr int kMaxPaths = 10;

enum class Code { Alamouti = 0, Multiplexing = 1 };
enum class Constellation { Bpsk = 0, Qpsk = 1 };

struct TransmissionApp {
  Code code = Code::Alamouti;
  Constellation constellation = Constellation::Bpsk;

  /// Dense id in 0..3: code * 2 + constellation.
  int id() const noexcept { return static_cast<int>(code) * 2 + static_cast<int>(constellation); }
  static TransmissionApp from_id(int id);
  std::string name() const;  // e.g. "ALAMOUTI-QPSK"
  static TransmissionApp parse(std::string_view s);
  std::string_view code_name() const noexcept;
  std::string_view constellation_name() const noexcept;
  friend bool operator==(const TransmissionApp&, const TransmissionApp&) = default;
};

inline constexpr std::size_t kAppCount = 4;
std::array<TransmissionApp, kAppCount> all_apps();

struct ContextConfig {
  double mean_db = 5.0;
  double sigma_db = 5.0;
};

/// SNR from a Gaussian truncated to [-5, 15] dB by rejection; m uniform on 1..10.
PhyContext sample_context(Rng& rng, const ContextConfig& cfg = {});

/// 2x2 channel, row-major: h[r * 2 + t].
struct ChannelRealization {
  std::array<cplx, 4> h{};
  cplx at(int r, int t) const { return h[static_cast<std::size_t>(r * 2 + t)]; }
  double frobenius_sq() const;
};

/// e(phi) = (1, exp(-j 2 pi delta cos phi)) / sqrt(2)
std::array<cplx, 2> steering_vector(double phi, double delta = 0.5);

/// sqrt(snr) * sum_i a_i e_r(phi_r,i) e_t(phi_t,i)^H with a_i ~ CN(0, 1/m).
ChannelRealization build_channel(double snr_linear, int paths, Rng& rng);
ChannelRealization build_channel(const PhyContext& ctx, Rng& rng);

struct ArqConfig {
  int max_retx = 10;
  int symbols_per_packet = 8;
  void validate() const;
};

/// Test hooks; unset fields follow the context.
struct LinkOverrides {
  std::optional<double> noise_std;   // 0 gives a noiseless link
  std::optional<double> snr_linear;  // 0 stands in for SNR -> -inf
};

/// Sends `symbols` symbols over one channel use, returns how many were detected wrongly.
/// The noise draws are independent of the channel scale, so with a fixed
/// stream the error count is monotone in the SNR.
int count_symbol_errors(TransmissionApp app, const ChannelRealization& unit_channel,
                        double snr_linear, int symbols, double noise_std, Rng& rng);

/// One packet attempt on a fresh channel; true iff every symbol is recovered.
bool transmit_packet(TransmissionApp app, const PhyContext& ctx, const ArqConfig& arq, Rng& rng,
                     const LinkOverrides& ov = {});

/// Attempts until first success, capped at max_retx.
int transmit_arq(TransmissionApp app, const PhyContext& ctx, const ArqConfig& arq, Rng& rng,
                 const LinkOverrides& ov = {});

inline constexpr double kSerFloor = 1e-6;

/// Monte-Carlo symbol error rate over n_mc symbols; the stream is seeded from
/// `seed` alone so calls that differ only in SNR share their randomness.
double estimate_ser(TransmissionApp app, double snr_db, int paths, int n_mc, std::uint64_t seed);

/// SER grid over 1 dB SNR bins on [-5, 15] x m in 1..10 x four apps.
class SerTable {
 public:
  static constexpr int kBins = 20;

  SerTable();
  static SerTable build(int n_mc, std::uint64_t seed);

  static int bin_of(double snr_db);
  static double bin_low_db(int bin) { return kSnrMinDb + bin; }
  static double bin_center_db(int bin) { return kSnrMinDb + bin + 0.5; }

  /// Throws ConfigError if the cell was never filled.
  double ser(TransmissionApp app, int bin, int paths) const;
  double ser(TransmissionApp app, const PhyContext& ctx) const {
    return ser(app, bin_of(ctx.snr_db), ctx.paths);
  }
  void set(TransmissionApp app, int bin, int paths, double value);
  bool complete() const;

  int n_mc() const noexcept { return n_mc_; }
  std::uint64_t seed() const noexcept { return seed_; }

  /// Columns: app,snr_bin_low_db,m,ser,n_mc,seed
  void save_csv(std::ostream& out) const;
  static SerTable load_csv(std::istream& in);

 private:
  static std::size_t index(TransmissionApp app, int bin, int paths);
  std::vector<double> cells_;  // NaN marks a missing cell
  int n_mc_ = 0;
  std::uint64_t seed_ = 0;
};

/// log softmax of 1/(eps_i T) over the given SER values.
std::vector<double> softmax_log_probs(std::span<const double> sers, double temperature);

struct PhyPolicy {
  double temperature = 1.0;
  std::shared_ptr<const SerTable> table;

  std::array<double, kAppCount> log_selection_probs(const PhyContext& ctx) const;
  double log_selection_prob(TransmissionApp a, const PhyContext& ctx) const;
  /// log w_{from -> to}(x) = (1/eps_to - 1/eps_from) / T
  double log_weight(TransmissionApp from, TransmissionApp to, const PhyContext& ctx) const;
  TransmissionApp select_app(const PhyContext& ctx, Rng& rng) const;
  void validate() const;
};

/// Exact sampler for p(x | a). The policy is constant on each (SNR bin, m)
/// cell, so a cell is drawn from its tilted mass and the SNR is then drawn
/// from the truncated Gaussian restricted to that bin.
class PhyConditionalSampler {
 public:
  PhyConditionalSampler(PhyPolicy policy, ContextConfig cfg = {});
  PhyContext sample(TransmissionApp a, Rng& rng) const;
  double log_marginal(TransmissionApp a) const;

 private:
  PhyPolicy policy_;
  ContextConfig cfg_;
  std::array<std::vector<double>, kAppCount> cdf_;  // over bin * kMaxPaths + (m - 1)
  std::array<double, kAppCount> log_marginal_{};
};

}  // namespace whatif::phy
