#include <algorithm>
#include <cmath>
#include <random>

#include "network.hpp"
#include "whatif/errors.hpp"
#include "whatif/quantile_net.hpp"

namespace whatif::qnet {
namespace detail {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using GradMap = Eigen::Map<RowMat>;

ConstMap weight(const Dense& d, const std::vector<double>& p) {
  return ConstMap(p.data() + d.offset, static_cast<Eigen::Index>(d.out),
                  static_cast<Eigen::Index>(d.in));
}

Eigen::Map<const Eigen::VectorXd> bias(const Dense& d, const std::vector<double>& p) {
  return Eigen::Map<const Eigen::VectorXd>(p.data() + d.offset + d.out * d.in,
                                           static_cast<Eigen::Index>(d.out));
}

GradMap weight_grad(const Dense& d, std::vector<double>& g) {
  return GradMap(g.data() + d.offset, static_cast<Eigen::Index>(d.out),
                 static_cast<Eigen::Index>(d.in));
}

Eigen::Map<Eigen::VectorXd> bias_grad(const Dense& d, std::vector<double>& g) {
  return Eigen::Map<Eigen::VectorXd>(g.data() + d.offset + d.out * d.in,
                                     static_cast<Eigen::Index>(d.out));
}

MlpLayout make_mlp(std::size_t in, const std::vector<std::size_t>& widths, std::size_t& offset) {
  MlpLayout m;
  for (std::size_t w : widths) {
    Dense d{in, w, offset, true};
    offset += d.size();
    m.layers.push_back(d);
    in = w;
  }
  return m;
}

AttentionLayout make_attention(std::size_t in, std::size_t d_h, std::size_t d_o,
                               std::size_t& offset) {
  AttentionLayout a;
  a.d_h = d_h;
  a.wq = Dense{in, d_h, offset, false};
  offset += a.wq.size();
  a.wk = Dense{in, d_h, offset, false};
  offset += a.wk.size();
  a.wv = Dense{in, d_o, offset, false};
  offset += a.wv.size();
  return a;
}

Mat mlp_forward(const MlpLayout& m, const std::vector<double>& p, const Mat& x, MlpCache* cache) {
  Mat act = x;
  if (cache) {
    cache->inputs.clear();
    cache->pre.clear();
  }
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    const Dense& d = m.layers[l];
    Mat z = weight(d, p) * act;
    z.colwise() += bias(d, p);
    if (cache) {
      cache->inputs.push_back(act);
      cache->pre.push_back(z);
    }
    act = l + 1 < m.layers.size() ? Mat(z.cwiseMax(0.0)) : z;
  }
  return act;
}

Mat mlp_backward(const MlpLayout& m, const std::vector<double>& p, const MlpCache& cache,
                 Mat d, std::vector<double>& g) {
  for (std::size_t l = m.layers.size(); l-- > 0;) {
    const Dense& dl = m.layers[l];
    if (l + 1 < m.layers.size()) {
      d = d.cwiseProduct((cache.pre[l].array() > 0.0).cast<double>().matrix());
    }
    weight_grad(dl, g) += d * cache.inputs[l].transpose();
    bias_grad(dl, g) += d.rowwise().sum();
    d = weight(dl, p).transpose() * d;
  }
  return d;
}

// out = V * A with A = softmax over keys (rows) of K^T Q / sqrt(d_h), so each
// output token is a convex combination of value vectors.
Mat attention_forward(const AttentionLayout& a, const std::vector<double>& p, const Mat& x,
                      AttentionCache* cache) {
  Mat q = weight(a.wq, p) * x;
  Mat k = weight(a.wk, p) * x;
  Mat v = weight(a.wv, p) * x;
  Mat s = (k.transpose() * q) / std::sqrt(static_cast<double>(a.d_h));
  for (Eigen::Index j = 0; j < s.cols(); ++j) {
    const double m = s.col(j).maxCoeff();
    s.col(j) = (s.col(j).array() - m).exp().matrix();
    s.col(j) /= s.col(j).sum();
  }
  Mat out = v * s;
  if (cache) {
    cache->x = x;
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->a = std::move(s);
  }
  return out;
}

Mat attention_backward(const AttentionLayout& a, const std::vector<double>& p,
                       const AttentionCache& c, const Mat& d_out, std::vector<double>& g) {
  const double inv = 1.0 / std::sqrt(static_cast<double>(a.d_h));
  const Mat d_v = d_out * c.a.transpose();
  const Mat d_a = c.v.transpose() * d_out;
  Mat d_s(d_a.rows(), d_a.cols());
  for (Eigen::Index j = 0; j < d_a.cols(); ++j) {
    const double dot = c.a.col(j).dot(d_a.col(j));
    d_s.col(j) = c.a.col(j).cwiseProduct((d_a.col(j).array() - dot).matrix());
  }
  const Mat d_k = (c.q * d_s.transpose()) * inv;
  const Mat d_q = (c.k * d_s) * inv;
  weight_grad(a.wq, g) += d_q * c.x.transpose();
  weight_grad(a.wk, g) += d_k * c.x.transpose();
  weight_grad(a.wv, g) += d_v * c.x.transpose();
  return weight(a.wq, p).transpose() * d_q + weight(a.wk, p).transpose() * d_k +
         weight(a.wv, p).transpose() * d_v;
}

}  // namespace

Layout::Layout(const Architecture& arch) {
  arch.validate();
  std::size_t off = 0;
  if (const auto* ffa = std::get_if<FeedForwardArch>(&arch.layers)) {
    ff = make_mlp(ffa->widths.front(),
                  std::vector<std::size_t>(ffa->widths.begin() + 1, ffa->widths.end()), off);
  } else {
    const auto& at = std::get<AttentionArch>(arch.layers);
    attention_ = true;
    att1 = make_attention(at.token_dim, at.d_h, at.d_o, off);
    mlp1 = make_mlp(at.d_o, at.mlp1, off);
    att2 = make_attention(at.d_e, at.d_h, at.d_o, off);
    mlp2 = make_mlp(at.d_o, at.mlp2, off);
  }
  count_ = off;
}

std::vector<Dense> Layout::blocks() const {
  std::vector<Dense> out;
  if (!attention_) return ff.layers;
  for (const auto* a : {&att1}) out.insert(out.end(), {a->wq, a->wk, a->wv});
  out.insert(out.end(), mlp1.layers.begin(), mlp1.layers.end());
  out.insert(out.end(), {att2.wq, att2.wk, att2.wv});
  out.insert(out.end(), mlp2.layers.begin(), mlp2.layers.end());
  return out;
}

Mat scaled_input(const Architecture& arch, std::span<const double> context) {
  const auto& sc = arch.scaling;
  if (const auto* ffa = std::get_if<FeedForwardArch>(&arch.layers)) {
    if (context.size() != ffa->widths.front()) {
      throw ContractViolation("forward: context width does not match the feedforward input");
    }
    Mat x(static_cast<Eigen::Index>(context.size()), 1);
    for (std::size_t i = 0; i < context.size(); ++i) {
      x(static_cast<Eigen::Index>(i), 0) = (context[i] - sc.input_offset[i]) * sc.input_scale[i];
    }
    return x;
  }
  const auto& at = std::get<AttentionArch>(arch.layers);
  if (context.empty() || context.size() % at.token_dim != 0) {
    throw ContractViolation("forward: attention context must hold token_dim x K values");
  }
  const std::size_t k = context.size() / at.token_dim;
  Mat x(static_cast<Eigen::Index>(at.token_dim), static_cast<Eigen::Index>(k));
  for (std::size_t f = 0; f < at.token_dim; ++f) {
    for (std::size_t t = 0; t < k; ++t) {
      x(static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(t)) =
          (context[f * k + t] - sc.input_offset[f]) * sc.input_scale[f];
    }
  }
  return x;
}

Mat run_forward(const Layout& layout, const std::vector<double>& params, const Mat& input,
                Trace* trace) {
  if (!layout.attention()) return mlp_forward(layout.ff, params, input, trace ? &trace->ff : nullptr);
  Mat h = attention_forward(layout.att1, params, input, trace ? &trace->att1 : nullptr);
  h = mlp_forward(layout.mlp1, params, h, trace ? &trace->mlp1 : nullptr);
  h = attention_forward(layout.att2, params, h, trace ? &trace->att2 : nullptr);
  return mlp_forward(layout.mlp2, params, h, trace ? &trace->mlp2 : nullptr);
}

void run_backward(const Layout& layout, const std::vector<double>& params, const Trace& trace,
                  const Mat& d_out, std::vector<double>& grad) {
  if (!layout.attention()) {
    mlp_backward(layout.ff, params, trace.ff, d_out, grad);
    return;
  }
  Mat d = mlp_backward(layout.mlp2, params, trace.mlp2, d_out, grad);
  d = attention_backward(layout.att2, params, trace.att2, d, grad);
  d = mlp_backward(layout.mlp1, params, trace.mlp1, d, grad);
  attention_backward(layout.att1, params, trace.att1, d, grad);
}

}  // namespace detail

std::size_t Architecture::param_count() const { return detail::Layout(*this).param_count(); }

void Architecture::validate() const {
  std::size_t in_features = 0;
  if (const auto* ffa = std::get_if<FeedForwardArch>(&layers)) {
    if (ffa->widths.size() < 2 || ffa->widths.back() != 2) {
      throw ContractViolation("feedforward widths need an input and an output of width 2");
    }
    if (std::find(ffa->widths.begin(), ffa->widths.end(), std::size_t{0}) != ffa->widths.end()) {
      throw ContractViolation("feedforward widths must be positive");
    }
    in_features = ffa->widths.front();
  } else {
    const auto& at = std::get<AttentionArch>(layers);
    if (at.token_dim == 0 || at.d_h == 0 || at.d_o == 0 || at.d_e == 0) {
      throw ContractViolation("attention dimensions must be positive");
    }
    if (at.mlp1.empty() || at.mlp1.back() != at.d_e) {
      throw ContractViolation("MLP_1 must end in d_e outputs");
    }
    if (at.mlp2.empty() || at.mlp2.back() != 2) {
      throw ContractViolation("MLP_2 must end in 2 outputs");
    }
    in_features = at.token_dim;
  }
  if (scaling.input_offset.size() != in_features || scaling.input_scale.size() != in_features) {
    throw ContractViolation("input scaling length must match the input features");
  }
  if (!(scaling.output_scale > 0.0)) throw ContractViolation("output scale must be positive");
}

Architecture Architecture::phy_default() {
  Architecture a;
  a.layers = FeedForwardArch{{2, 10, 10, 5, 2}};
  // SNR in [-5, 15] dB, paths in 1..10, latency in 1..10 attempts.
  a.scaling.input_offset = {5.0, 5.5};
  a.scaling.input_scale = {0.2, 0.2};
  a.scaling.output_offset = 5.5;
  a.scaling.output_scale = 4.5;
  return a;
}

Architecture Architecture::mac_default(double backlog_scale) {
  Architecture a;
  a.layers = AttentionArch{};
  a.scaling.input_offset = {0.0, 0.0};
  a.scaling.input_scale = {1.0 / backlog_scale, 1.0 / 15.0};
  a.scaling.output_offset = 0.0;
  a.scaling.output_scale = backlog_scale;
  return a;
}

QuantileModel::QuantileModel(Architecture arch, double alpha, std::vector<double> params)
    : arch_(std::move(arch)), alpha_(alpha), params_(std::move(params)) {
  if (!(alpha_ > 0.0 && alpha_ < 1.0)) throw ContractViolation("alpha must lie in (0, 1)");
  if (params_.size() != arch_.param_count()) {
    throw ContractViolation("parameter vector length does not match the architecture");
  }
}

QuantileModel QuantileModel::initialize(Architecture arch, double alpha, std::uint64_t seed) {
  const detail::Layout layout(arch);
  std::vector<double> p(layout.param_count(), 0.0);
  std::mt19937_64 gen(seed);
  for (const auto& d : layout.blocks()) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(d.in));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (std::size_t i = 0; i < d.size(); ++i) p[d.offset + i] = u(gen);
  }
  return QuantileModel(std::move(arch), alpha, std::move(p));
}

std::size_t QuantileModel::kpi_count(std::size_t context_len) const {
  if (const auto* at = std::get_if<AttentionArch>(&arch_.layers)) {
    return context_len / at->token_dim;
  }
  return 1;
}

conformal::IntervalSet QuantileModel::forward(std::span<const double> context) const {
  const detail::Layout layout(arch_);
  const auto x = detail::scaled_input(arch_, context);
  const auto out = detail::run_forward(layout, params_, x, nullptr);
  const auto& sc = arch_.scaling;
  std::vector<double> lo(static_cast<std::size_t>(out.cols())), hi(lo.size());
  for (Eigen::Index k = 0; k < out.cols(); ++k) {
    lo[static_cast<std::size_t>(k)] = out(0, k) * sc.output_scale + sc.output_offset;
    hi[static_cast<std::size_t>(k)] = out(1, k) * sc.output_scale + sc.output_offset;
  }
  return conformal::IntervalSet(std::move(lo), std::move(hi));
}

}  // namespace whatif::qnet
