#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "whatif/errors.hpp"
#include "whatif/numfmt.hpp"
#include "whatif/quantile_net.hpp"

namespace whatif::qnet {

namespace {

constexpr const char* kMagic = "whatif-quantile-model";
constexpr int kVersion = 1;

void write_list(std::ostream& out, const char* key, const std::vector<std::size_t>& v) {
  out << key << ' ' << v.size();
  for (auto x : v) out << ' ' << x;
  out << '\n';
}

void write_list(std::ostream& out, const char* key, const std::vector<double>& v) {
  out << key << ' ' << v.size();
  for (auto x : v) out << ' ' << format_double(x);
  out << '\n';
}

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  std::istringstream line(const std::string& key) {
    std::string text;
    while (std::getline(in_, text)) {
      if (!trim(text).empty()) break;
    }
    std::istringstream ls(text);
    std::string got;
    ls >> got;
    if (got != key) throw ConfigError("checkpoint: expected field '" + key + "', got '" + got + "'");
    return ls;
  }

  std::string word(const std::string& key) {
    auto ls = line(key);
    std::string v;
    ls >> v;
    return v;
  }

  std::size_t size(const std::string& key) {
    return static_cast<std::size_t>(parse_int(word(key)));
  }

  double real(const std::string& key) { return parse_double(word(key)); }

  std::vector<std::size_t> sizes(const std::string& key) {
    auto ls = line(key);
    std::size_t n = 0;
    ls >> n;
    std::vector<std::size_t> v(n);
    for (auto& x : v) {
      std::string t;
      ls >> t;
      x = static_cast<std::size_t>(parse_int(t));
    }
    return v;
  }

  std::vector<double> reals(const std::string& key) {
    auto ls = line(key);
    std::size_t n = 0;
    ls >> n;
    std::vector<double> v(n);
    for (auto& x : v) {
      std::string t;
      ls >> t;
      x = parse_double(t);
    }
    return v;
  }

  std::istream& stream() { return in_; }

 private:
  std::istream& in_;
};

}  // namespace

void save_checkpoint(const QuantileModel& model, std::ostream& out) {
  const auto& arch = model.architecture();
  out << kMagic << ' ' << kVersion << '\n';
  out << "alpha " << format_double(model.alpha()) << '\n';
  if (const auto* ff = std::get_if<FeedForwardArch>(&arch.layers)) {
    out << "arch feedforward\n";
    write_list(out, "widths", ff->widths);
  } else {
    const auto& at = std::get<AttentionArch>(arch.layers);
    out << "arch attention\n";
    out << "token_dim " << at.token_dim << '\n';
    out << "d_h " << at.d_h << '\n';
    out << "d_o " << at.d_o << '\n';
    out << "d_e " << at.d_e << '\n';
    write_list(out, "mlp1", at.mlp1);
    write_list(out, "mlp2", at.mlp2);
  }
  write_list(out, "input_offset", arch.scaling.input_offset);
  write_list(out, "input_scale", arch.scaling.input_scale);
  out << "output_offset " << format_double(arch.scaling.output_offset) << '\n';
  out << "output_scale " << format_double(arch.scaling.output_scale) << '\n';
  out << "params " << model.params().size() << '\n';
  for (double p : model.params()) out << format_double(p) << '\n';
  if (!out) throw IoError("checkpoint: write failed");
}

QuantileModel load_checkpoint(std::istream& in) {
  Reader r(in);
  {
    auto ls = r.line(kMagic);
    int version = 0;
    ls >> version;
    if (version != kVersion) throw ConfigError("checkpoint: unsupported version");
  }
  const double alpha = r.real("alpha");
  Architecture arch;
  const std::string kind = r.word("arch");
  if (kind == "feedforward") {
    arch.layers = FeedForwardArch{r.sizes("widths")};
  } else if (kind == "attention") {
    AttentionArch at;
    at.token_dim = r.size("token_dim");
    at.d_h = r.size("d_h");
    at.d_o = r.size("d_o");
    at.d_e = r.size("d_e");
    at.mlp1 = r.sizes("mlp1");
    at.mlp2 = r.sizes("mlp2");
    arch.layers = at;
  } else {
    throw ConfigError("checkpoint: unknown architecture '" + kind + "'");
  }
  arch.scaling.input_offset = r.reals("input_offset");
  arch.scaling.input_scale = r.reals("input_scale");
  arch.scaling.output_offset = r.real("output_offset");
  arch.scaling.output_scale = r.real("output_scale");
  const std::size_t n = r.size("params");
  std::vector<double> params(n);
  for (auto& p : params) {
    std::string t;
    if (!(r.stream() >> t)) throw ConfigError("checkpoint: truncated parameter list");
    p = parse_double(t);
  }
  arch.validate();
  return QuantileModel(std::move(arch), alpha, std::move(params));
}

}  // namespace whatif::qnet
