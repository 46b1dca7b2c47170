#include "whatif/environment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "whatif/errors.hpp"
#include "whatif/numfmt.hpp"

namespace whatif::harness {

std::string_view environment_name(EnvironmentKind k) noexcept {
  switch (k) {
    case EnvironmentKind::Mac: return "MAC";
    case EnvironmentKind::Phy: return "PHY";
    case EnvironmentKind::Synthetic: return "SYNTHETIC";
  }
  return "?";
}

EnvironmentKind parse_environment(std::string_view s) {
  if (s == "MAC") return EnvironmentKind::Mac;
  if (s == "PHY") return EnvironmentKind::Phy;
  if (s == "SYNTHETIC") return EnvironmentKind::Synthetic;
  throw ConfigError("unknown environment '" + std::string(s) + "' (expected MAC, PHY or SYNTHETIC)");
}

int Environment::parse_app(std::string_view name) const {
  const auto names = app_names();
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return static_cast<int>(i);
  throw ConfigError("unknown app '" + std::string(name) + "' for environment " + std::string(this->name()));
}

double Environment::log_weight(int from, int to, std::span<const double> ctx) const {
  if (from == to) return 0.0;
  return log_selection_prob(to, ctx) - log_selection_prob(from, ctx);
}

int Environment::select_app(std::span<const double> ctx, Rng& rng) const {
  const auto n = static_cast<int>(app_names().size());
  const double u = rng.uniform();
  double acc = 0.0;
  for (int a = 0; a + 1 < n; ++a) {
    acc += std::exp(log_selection_prob(a, ctx));
    if (u < acc) return a;
  }
  return n - 1;
}

std::vector<std::string> Environment::app_cells(int app) const {
  return {app_names().at(static_cast<std::size_t>(app))};
}

int Environment::parse_app_cells(std::span<const std::string> cells) const {
  if (cells.size() != 1) throw ConfigError("expected one app column");
  return parse_app(cells[0]);
}

namespace {

double logistic(double z) { return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }

double log_logistic(double z) { return z > 0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z)); }

void check_app(int app, int count) {
  if (app < 0 || app >= count) throw ContractViolation("app id out of range");
}

class MacEnvironment final : public Environment {
 public:
  explicit MacEnvironment(const MacEnvironmentOptions& o)
      : opt_(o),
        policy_(mac::MacPolicy::standard(o.users, o.temperature, o.max_backlog)),
        sampler_(o.users, policy_, o.contexts) {
    opt_.frame.validate();
  }

  EnvironmentKind kind() const noexcept override { return EnvironmentKind::Mac; }
  std::size_t kpi_count() const noexcept override { return opt_.users; }
  std::size_t context_size() const noexcept override { return 2 * opt_.users; }
  std::vector<std::string> app_names() const override { return {"RR", "PFCA"}; }

  std::vector<double> sample_context(Rng& rng) const override {
    return mac::generate_context(opt_.users, rng, opt_.contexts).flatten();
  }
  std::vector<double> sample_context_given_app(int app, Rng& rng) const override {
    check_app(app, 2);
    return sampler_.sample(static_cast<mac::App>(app), rng).flatten();
  }
  double log_selection_prob(int app, std::span<const double> ctx) const override {
    check_app(app, 2);
    return mac::log_selection_prob(static_cast<mac::App>(app), unflatten(ctx), policy_);
  }
  double log_marginal(int app) const override {
    check_app(app, 2);
    return sampler_.log_marginal(static_cast<mac::App>(app));
  }
  double log_weight(int from, int to, std::span<const double> ctx) const override {
    check_app(from, 2);
    check_app(to, 2);
    return mac::log_weight(static_cast<mac::App>(from), static_cast<mac::App>(to), unflatten(ctx), policy_);
  }
  std::vector<double> rollout(int app, std::span<const double> ctx, Rng& rng) const override {
    check_app(app, 2);
    const auto fin = mac::run_frame(static_cast<mac::App>(app), unflatten(ctx), policy_.payload, opt_.frame, rng);
    return {fin.begin(), fin.end()};
  }
  double normalizer(std::span<const double> ctx) const override { return max_backlog(ctx); }
  conformal::Interval kpi_domain(std::span<const double> ctx) const override { return {0.0, max_backlog(ctx)}; }
  qnet::Architecture default_architecture() const override {
    return qnet::Architecture::mac_default(opt_.max_backlog);
  }

  std::vector<std::string> context_columns() const override {
    std::vector<std::string> c;
    for (std::size_t k = 1; k <= opt_.users; ++k) c.push_back("b_in_" + std::to_string(k));
    for (std::size_t k = 1; k <= opt_.users; ++k) c.push_back("cqi_" + std::to_string(k));
    return c;
  }
  std::vector<std::string> kpi_columns() const override {
    std::vector<std::string> c;
    for (std::size_t k = 1; k <= opt_.users; ++k) c.push_back("b_fin_" + std::to_string(k));
    return c;
  }

 private:
  mac::MacContext unflatten(std::span<const double> ctx) const {
    if (ctx.size() != context_size()) throw ContractViolation("MAC context has the wrong length");
    return mac::MacContext::unflatten(ctx);
  }
  double max_backlog(std::span<const double> ctx) const {
    if (ctx.size() != context_size()) throw ContractViolation("MAC context has the wrong length");
    return *std::max_element(ctx.begin(), ctx.begin() + static_cast<long>(opt_.users));
  }

  MacEnvironmentOptions opt_;
  mac::MacPolicy policy_;
  mac::ConditionalContextSampler sampler_;
};

class PhyEnvironment final : public Environment {
 public:
  explicit PhyEnvironment(const PhyEnvironmentOptions& o)
      : opt_(o), policy_{o.temperature, o.ser_table}, sampler_(policy_, o.contexts) {
    opt_.arq.validate();
  }

  EnvironmentKind kind() const noexcept override { return EnvironmentKind::Phy; }
  std::size_t kpi_count() const noexcept override { return 1; }
  std::size_t context_size() const noexcept override { return 2; }
  std::vector<std::string> app_names() const override {
    std::vector<std::string> n;
    for (const auto& a : phy::all_apps()) n.push_back(a.name());
    return n;
  }

  std::vector<double> sample_context(Rng& rng) const override {
    return flatten(phy::sample_context(rng, opt_.contexts));
  }
  std::vector<double> sample_context_given_app(int app, Rng& rng) const override {
    return flatten(sampler_.sample(phy::TransmissionApp::from_id(app), rng));
  }
  double log_selection_prob(int app, std::span<const double> ctx) const override {
    return policy_.log_selection_prob(phy::TransmissionApp::from_id(app), unflatten(ctx));
  }
  double log_marginal(int app) const override {
    return sampler_.log_marginal(phy::TransmissionApp::from_id(app));
  }
  double log_weight(int from, int to, std::span<const double> ctx) const override {
    return policy_.log_weight(phy::TransmissionApp::from_id(from), phy::TransmissionApp::from_id(to),
                              unflatten(ctx));
  }
  std::vector<double> rollout(int app, std::span<const double> ctx, Rng& rng) const override {
    return {static_cast<double>(
        phy::transmit_arq(phy::TransmissionApp::from_id(app), unflatten(ctx), opt_.arq, rng))};
  }
  double normalizer(std::span<const double>) const override { return 1.0; }
  conformal::Interval kpi_domain(std::span<const double>) const override {
    return {1.0, static_cast<double>(opt_.arq.max_retx)};
  }
  qnet::Architecture default_architecture() const override { return qnet::Architecture::phy_default(); }

  std::vector<std::string> context_columns() const override { return {"snr_db", "m"}; }
  std::vector<std::string> app_columns() const override { return {"app_code", "app_constellation"}; }
  std::vector<std::string> kpi_columns() const override { return {"y"}; }
  std::vector<std::string> app_cells(int app) const override {
    const auto a = phy::TransmissionApp::from_id(app);
    return {std::string(a.code_name()), std::string(a.constellation_name())};
  }
  int parse_app_cells(std::span<const std::string> cells) const override {
    if (cells.size() != 2) throw ConfigError("expected app_code and app_constellation columns");
    return phy::TransmissionApp::parse(cells[0] + "-" + cells[1]).id();
  }

 private:
  static std::vector<double> flatten(const phy::PhyContext& c) { return {c.snr_db, static_cast<double>(c.paths)}; }
  static phy::PhyContext unflatten(std::span<const double> ctx) {
    if (ctx.size() != 2) throw ContractViolation("PHY context has the wrong length");
    phy::PhyContext c{ctx[0], static_cast<int>(std::lround(ctx[1]))};
    c.validate();
    return c;
  }

  PhyEnvironmentOptions opt_;
  phy::PhyPolicy policy_;
  phy::PhyConditionalSampler sampler_;
};

class SyntheticEnvironment final : public Environment {
 public:
  explicit SyntheticEnvironment(const SyntheticEnvironmentOptions& o) : opt_(o) {
    if (!std::isfinite(o.slope)) throw ContractViolation("synthetic policy slope must be finite");
  }

  EnvironmentKind kind() const noexcept override { return EnvironmentKind::Synthetic; }
  std::size_t kpi_count() const noexcept override { return 1; }
  std::size_t context_size() const noexcept override { return 1; }
  std::vector<std::string> app_names() const override { return {"A", "B"}; }

  std::vector<double> sample_context(Rng& rng) const override { return {rng.normal()}; }
  std::vector<double> sample_context_given_app(int app, Rng& rng) const override {
    check_app(app, 2);
    for (;;) {
      const double x = rng.normal();
      if (rng.uniform() < std::exp(log_prob(app, x))) return {x};
    }
  }
  double log_selection_prob(int app, std::span<const double> ctx) const override {
    check_app(app, 2);
    return log_prob(app, at(ctx));
  }
  // logistic(slope x) is odd-symmetric about 1/2 and x is symmetric about 0.
  double log_marginal(int app) const override {
    check_app(app, 2);
    return -std::numbers::ln2;
  }
  std::vector<double> rollout(int app, std::span<const double> ctx, Rng& rng) const override {
    check_app(app, 2);
    const double x = at(ctx);
    const double u = rng.uniform(-1.0, 1.0);
    return {app == 1 ? x + spread(x) * u : -x + 0.5 * u};
  }
  double normalizer(std::span<const double>) const override { return 1.0; }
  conformal::Interval kpi_domain(std::span<const double> ctx) const override {
    const double r = std::abs(at(ctx)) + 1.0;
    return {-r, r};
  }
  qnet::Architecture default_architecture() const override {
    qnet::Architecture a;
    a.layers = qnet::FeedForwardArch{{1, 16, 16, 2}};
    a.scaling.input_offset = {0.0};
    a.scaling.input_scale = {1.0};
    return a;
  }
  Predictor fixed_predictor(int target_app) const override {
    check_app(target_app, 2);
    if (target_app != 1) return {};
    return [](std::span<const double> ctx) {
      if (ctx.size() != 1) throw ContractViolation("synthetic context has the wrong length");
      return conformal::IntervalSet({ctx[0] - 0.5}, {ctx[0] + 0.5});
    };
  }

  std::vector<std::string> context_columns() const override { return {"x"}; }
  std::vector<std::string> kpi_columns() const override { return {"y"}; }

  static double spread(double x) { return 0.2 + 0.6 * logistic(-2.0 * x); }

 private:
  static double at(std::span<const double> ctx) {
    if (ctx.size() != 1) throw ContractViolation("synthetic context has the wrong length");
    return ctx[0];
  }
  double log_prob(int app, double x) const {
    const double z = opt_.slope * x;
    return app == 1 ? log_logistic(z) : log_logistic(-z);
  }

  SyntheticEnvironmentOptions opt_;
};

}  // namespace

std::unique_ptr<Environment> make_mac_environment(const MacEnvironmentOptions& opt) {
  return std::make_unique<MacEnvironment>(opt);
}

std::unique_ptr<Environment> make_phy_environment(const PhyEnvironmentOptions& opt) {
  if (!opt.ser_table || !opt.ser_table->complete())
    throw ConfigError("PHY environment needs a complete SER table");
  return std::make_unique<PhyEnvironment>(opt);
}

std::unique_ptr<Environment> make_synthetic_environment(const SyntheticEnvironmentOptions& opt) {
  return std::make_unique<SyntheticEnvironment>(opt);
}

}  // namespace whatif::harness
