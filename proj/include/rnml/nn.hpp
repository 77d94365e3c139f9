#ifndef RNML_NN_HPP
#define RNML_NN_HPP

#include "rnml/core.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace rnml::nn {

inline double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

inline double softplus(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

// --- parameter plumbing ------------------------------------------------------

// Named view over a column-major parameter block (MatrixXd or VectorXd).
struct ParamRef {
  std::string name;
  double* data = nullptr;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;

  Eigen::Index size() const { return rows * cols; }
  Eigen::Map<Matrix> map() const { return {data, rows, cols}; }
  Eigen::Map<Eigen::ArrayXd> flat() const { return {data, size()}; }
};

inline ParamRef param_ref(std::string name, Matrix& m) {
  return {std::move(name), m.data(), m.rows(), m.cols()};
}
inline ParamRef param_ref(std::string name, Vector& v) {
  return {std::move(name), v.data(), v.size(), 1};
}

// Seeded uniform [-0.1, 0.1] fill; the shared weight init.
void init_uniform(Matrix& w, Rng& rng, double scale = 0.1);

// --- embedding table ---------------------------------------------------------

// Columns of `table` (d x V) gathered by 0-based ids.
Matrix embed_lookup(const Matrix& table, const std::vector<std::int32_t>& ids);

// Accumulates d_out columns into grad columns ids[j]; touched columns only.
void embed_backward(const std::vector<std::int32_t>& ids, const Matrix& d_out, Matrix& grad);

// --- affine ------------------------------------------------------------------

struct Affine {
  Matrix w;  // out x in
  Vector b;  // out

  Matrix forward(const Matrix& x) const { return (w * x).colwise() + b; }
};

struct AffineGrad {
  Matrix w;
  Vector b;
  void resize_like(const Affine& a) {
    w.setZero(a.w.rows(), a.w.cols());
    b.setZero(a.b.size());
  }
};

// --- MLP: affine + ReLU stack, linear final layer ----------------------------

struct Mlp {
  std::vector<Affine> layers;

  // dims = {in, h1, ..., out}
  static Mlp make(const std::vector<Eigen::Index>& dims, Rng& rng);
  Eigen::Index in_dim() const { return layers.front().w.cols(); }
  Eigen::Index out_dim() const { return layers.back().w.rows(); }
};

struct MlpCache {
  std::vector<Matrix> inputs;  // input to each layer (post-ReLU of the previous)
};

struct MlpGrad {
  std::vector<AffineGrad> layers;
  void resize_like(const Mlp& m) {
    layers.resize(m.layers.size());
    for (std::size_t i = 0; i < m.layers.size(); ++i) layers[i].resize_like(m.layers[i]);
  }
};

Matrix mlp_forward(const Mlp& mlp, const Matrix& x, MlpCache* cache = nullptr);
// Returns d_input; accumulates into grad.
Matrix mlp_backward(const Mlp& mlp, const MlpCache& cache, const Matrix& d_out, MlpGrad& grad);

// --- LSTM --------------------------------------------------------------------

// Gate rows of wx/wh/b are stacked [input; forget; candidate; output].
struct Lstm {
  Matrix wx;  // 4h x in
  Matrix wh;  // 4h x h
  Vector b;   // 4h

  static Lstm make(Eigen::Index in, Eigen::Index hidden, Rng& rng, double forget_bias = 1.0);
  Eigen::Index hidden() const { return wh.cols(); }
  Eigen::Index in_dim() const { return wx.cols(); }
};

struct LstmGrad {
  Matrix wx, wh;
  Vector b;
  void resize_like(const Lstm& l) {
    wx.setZero(l.wx.rows(), l.wx.cols());
    wh.setZero(l.wh.rows(), l.wh.cols());
    b.setZero(l.b.size());
  }
};

// Packed batch: step t sees the first active[t] columns (sequences sorted by
// length, longest first). h and c start at zero.
struct LstmCache {
  std::vector<Matrix> x;       // in x active[t]
  std::vector<Matrix> gates;   // 4h x active[t], post-activation
  std::vector<Matrix> c;       // h x active[t]
  std::vector<Matrix> tanh_c;  // h x active[t]
  std::vector<Matrix> h;       // h x active[t]
  std::vector<Eigen::Index> active;

  Eigen::Index steps() const { return static_cast<Eigen::Index>(x.size()); }
};

// Runs the recurrence over x_steps (active widths must be non-increasing).
void lstm_forward_packed(const Lstm& lstm, const std::vector<Matrix>& x_steps, LstmCache& cache);

// d_h_last.col(s) is the loss gradient at sequence s's final hidden state;
// lengths[s] gives that final step. Returns d_x per step; accumulates into grad.
std::vector<Matrix> lstm_backward_packed(const Lstm& lstm, const LstmCache& cache,
                                         const Matrix& d_h_last,
                                         const std::vector<Eigen::Index>& lengths, LstmGrad& grad);

// Single sequence (columns of x are timesteps); returns all hidden states, one
// column per step. The last column is the h^(T) the regressor consumes.
Matrix lstm_forward(const Lstm& lstm, const Matrix& x);

// --- L2 normalization --------------------------------------------------------

// x / sqrt(|x|^2 + eps^2); the epsilon keeps the gradient finite at zero while
// leaving any input with norm > 1e-6 unit-length to 1e-12.
inline constexpr double kL2Epsilon = 1e-12;

Vector l2_normalize(const Vector& x);
// d_x given upstream d_y; y need not be precomputed.
Vector l2_normalize_backward(const Vector& x, const Vector& d_y);

// --- Adam --------------------------------------------------------------------

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam(const std::vector<ParamRef>& params, AdamConfig config);

  // One bias-corrected update; grads must align with the construction order.
  // Throws on non-finite gradients, naming the offending tensor and step.
  void step(const std::vector<ParamRef>& params, const std::vector<ParamRef>& grads);

  std::int64_t steps_taken() const { return step_; }
  const AdamConfig& config() const { return config_; }

 private:
  AdamConfig config_;
  std::int64_t step_ = 0;
  std::vector<Eigen::ArrayXd> m_;
  std::vector<Eigen::ArrayXd> v_;
};

// --- finite-difference oracle ------------------------------------------------

struct GradCheckOptions {
  double step = 1e-5;
  int max_coords_per_tensor = 0;  // 0 = every coordinate
  std::uint64_t seed = 0;
  // both slopes below this are compared absolutely instead of relatively;
  // central differences carry ~1e-11 of fp noise, which the relative formula
  // would otherwise amplify on near-zero coordinates
  double zero_tolerance = 1e-5;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::int64_t checked = 0;
  std::int64_t excluded = 0;  // coordinates skipped as non-differentiable kinks
};

// Central differences against caller-supplied analytic gradients. `loss` must
// be a pure function of the referenced parameters. Coordinates where the two
// one-sided slopes disagree (ReLU/hinge kinks) are excluded and counted.
GradCheckReport grad_check(const std::function<double()>& loss,
                           const std::vector<ParamRef>& params,
                           const std::vector<ParamRef>& analytic,
                           const GradCheckOptions& options = {});

}  // namespace rnml::nn

#endif  // RNML_NN_HPP
