#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>

#include "whatif/errors.hpp"
#include "whatif/numfmt.hpp"
#include "whatif/phy_sim.hpp"

namespace whatif::phy {

double estimate_ser(TransmissionApp app, double snr_db, int paths, int n_mc, std::uint64_t seed) {
  if (n_mc < 2) throw ContractViolation("SER estimate needs n_mc >= 2");
  if (paths < 1 || paths > kMaxPaths) throw ContractViolation("paths outside 1..10");
  Rng rng(seed);
  const double snr = std::pow(10.0, snr_db / 10.0);
  long errors = 0;
  for (int done = 0; done < n_mc; done += 2) {
    const auto unit = build_channel(1.0, paths, rng);
    errors += count_symbol_errors(app, unit, snr, std::min(2, n_mc - done), 1.0, rng);
  }
  return std::clamp(static_cast<double>(errors) / n_mc, kSerFloor, 1.0 - kSerFloor);
}

SerTable::SerTable()
    : cells_(kAppCount * kBins * kMaxPaths, std::numeric_limits<double>::quiet_NaN()) {}

std::size_t SerTable::index(TransmissionApp app, int bin, int paths) {
  if (bin < 0 || bin >= kBins) throw ContractViolation("SNR bin outside the table");
  if (paths < 1 || paths > kMaxPaths) throw ContractViolation("paths outside 1..10");
  return (static_cast<std::size_t>(app.id()) * kBins + static_cast<std::size_t>(bin)) * kMaxPaths +
         static_cast<std::size_t>(paths - 1);
}

int SerTable::bin_of(double snr_db) {
  if (!(snr_db >= kSnrMinDb && snr_db <= kSnrMaxDb)) throw ContractViolation("SNR outside [-5, 15] dB");
  return std::min(kBins - 1, static_cast<int>(std::floor(snr_db - kSnrMinDb)));
}

double SerTable::ser(TransmissionApp app, int bin, int paths) const {
  const double v = cells_[index(app, bin, paths)];
  if (std::isnan(v))
    throw ConfigError("SER table has no cell for " + app.name() + ", bin " + std::to_string(bin) +
                      ", m=" + std::to_string(paths));
  return v;
}

void SerTable::set(TransmissionApp app, int bin, int paths, double value) {
  if (!(value > 0.0 && value < 1.0)) throw ContractViolation("SER must lie in (0, 1)");
  cells_[index(app, bin, paths)] = value;
}

bool SerTable::complete() const {
  return std::none_of(cells_.begin(), cells_.end(), [](double v) { return std::isnan(v); });
}

SerTable SerTable::build(int n_mc, std::uint64_t seed) {
  SerTable t;
  t.n_mc_ = n_mc;
  t.seed_ = seed;
  for (const auto& app : all_apps())
    for (int m = 1; m <= kMaxPaths; ++m) {
      // One stream per (app, m), reused across bins: common random numbers.
      const std::uint64_t cell_seed =
          Rng::derive(seed, static_cast<std::uint64_t>(app.id()), static_cast<std::uint64_t>(m)).next_u64();
      for (int b = 0; b < kBins; ++b) t.set(app, b, m, estimate_ser(app, bin_center_db(b), m, n_mc, cell_seed));
    }
  return t;
}

void SerTable::save_csv(std::ostream& out) const {
  out << "app,snr_bin_low_db,m,ser,n_mc,seed\n";
  for (const auto& app : all_apps())
    for (int b = 0; b < kBins; ++b)
      for (int m = 1; m <= kMaxPaths; ++m) {
        const double v = cells_[index(app, b, m)];
        if (std::isnan(v)) continue;
        out << app.name() << ',' << format_double(bin_low_db(b)) << ',' << m << ',' << format_double(v) << ','
            << n_mc_ << ',' << seed_ << '\n';
      }
  if (!out) throw IoError("failed writing SER table");
}

SerTable SerTable::load_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || trim(line) != "app,snr_bin_low_db,m,ser,n_mc,seed")
    throw ConfigError("SER table: missing or unexpected header");
  SerTable t;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(std::string(trim(cell)));
    if (f.size() != 6) throw ConfigError("SER table row " + std::to_string(row) + ": expected 6 fields");
    const auto app = TransmissionApp::parse(f[0]);
    const double low = parse_double(f[1]);
    const int bin = static_cast<int>(low - kSnrMinDb);
    if (bin_low_db(bin) != low || bin < 0 || bin >= kBins)
      throw ConfigError("SER table row " + std::to_string(row) + ": SNR bin edge off the grid");
    const auto m = parse_int(f[2]);
    if (m < 1 || m > kMaxPaths) throw ConfigError("SER table row " + std::to_string(row) + ": m outside 1..10");
    const double v = parse_double(f[3]);
    if (!(v > 0.0 && v < 1.0)) throw ConfigError("SER table row " + std::to_string(row) + ": SER outside (0, 1)");
    t.cells_[index(app, bin, static_cast<int>(m))] = v;
    t.n_mc_ = static_cast<int>(parse_int(f[4]));
    t.seed_ = static_cast<std::uint64_t>(std::stoull(f[5]));
  }
  return t;
}

}  // namespace whatif::phy
