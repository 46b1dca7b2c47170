#pragma once

// Internal forward/backward passes over the flat parameter vector.

#include <Eigen/Dense>
#include <cstddef>
#include <span>
#include <vector>

#include "whatif/quantile_net.hpp"

namespace whatif::qnet::detail {

using Mat = Eigen::MatrixXd;

struct Dense {
  std::size_t in = 0;
  std::size_t out = 0;
  std::size_t offset = 0;  // W (out x in, row-major), then b (out)
  bool bias = true;

  std::size_t size() const { return out * in + (bias ? out : 0); }
};

struct MlpLayout {
  std::vector<Dense> layers;
};

struct MlpCache {
  std::vector<Mat> inputs;
  std::vector<Mat> pre;
};

struct AttentionLayout {
  Dense wq, wk, wv;
  std::size_t d_h = 0;
};

struct AttentionCache {
  Mat x, q, k, v, a;
};

/// Parameter offsets for one architecture.
class Layout {
 public:
  explicit Layout(const Architecture& arch);

  std::size_t param_count() const noexcept { return count_; }
  bool attention() const noexcept { return attention_; }

  MlpLayout ff;
  AttentionLayout att1, att2;
  MlpLayout mlp1, mlp2;

  /// Every dense block in parameter order, with its fan-in.
  std::vector<Dense> blocks() const;

 private:
  std::size_t count_ = 0;
  bool attention_ = false;
};

/// Cached activations for one context.
struct Trace {
  MlpCache ff;
  AttentionCache att1, att2;
  MlpCache mlp1, mlp2;
};

/// Scaled inputs as a matrix: (features x 1) for FEEDFORWARD, (token_dim x K)
/// for ATTENTION.
Mat scaled_input(const Architecture& arch, std::span<const double> context);

/// Raw network output (2 x K) in scaled output units.
Mat run_forward(const Layout& layout, const std::vector<double>& params, const Mat& input,
                Trace* trace);

/// Accumulates d(objective)/d(params) into grad given d(objective)/d(output).
void run_backward(const Layout& layout, const std::vector<double>& params, const Trace& trace,
                  const Mat& d_out, std::vector<double>& grad);

}  // namespace whatif::qnet::detail
