#include "rnml/nn.hpp"

namespace rnml::nn {

void init_uniform(Matrix& w, Rng& rng, double scale) {
  for (Eigen::Index j = 0; j < w.cols(); ++j) {
    for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = rng.uniform(-scale, scale);
  }
}

Matrix embed_lookup(const Matrix& table, const std::vector<std::int32_t>& ids) {
  Matrix out(table.rows(), static_cast<Eigen::Index>(ids.size()));
  for (std::size_t j = 0; j < ids.size(); ++j) {
    if (ids[j] < 0 || ids[j] >= table.cols()) {
      throw std::invalid_argument("embed_lookup: id " + std::to_string(ids[j]) +
                                  " outside vocabulary of " + std::to_string(table.cols()));
    }
    out.col(static_cast<Eigen::Index>(j)) = table.col(ids[j]);
  }
  return out;
}

void embed_backward(const std::vector<std::int32_t>& ids, const Matrix& d_out, Matrix& grad) {
  for (std::size_t j = 0; j < ids.size(); ++j) {
    grad.col(ids[j]) += d_out.col(static_cast<Eigen::Index>(j));
  }
}

Mlp Mlp::make(const std::vector<Eigen::Index>& dims, Rng& rng) {
  if (dims.size() < 2) throw std::invalid_argument("Mlp::make: need at least in and out dims");
  Mlp mlp;
  mlp.layers.resize(dims.size() - 1);
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    Affine& layer = mlp.layers[i];
    layer.w.resize(dims[i + 1], dims[i]);
    init_uniform(layer.w, rng);
    layer.b.setZero(dims[i + 1]);
  }
  return mlp;
}

Matrix mlp_forward(const Mlp& mlp, const Matrix& x, MlpCache* cache) {
  if (cache) {
    cache->inputs.clear();
    cache->inputs.reserve(mlp.layers.size());
  }
  Matrix cur = x;
  for (std::size_t i = 0; i < mlp.layers.size(); ++i) {
    if (cache) cache->inputs.push_back(cur);
    Matrix a = mlp.layers[i].forward(cur);
    if (i + 1 < mlp.layers.size()) {
      cur = a.cwiseMax(0.0);  // ReLU; subgradient at 0 is 0
    } else {
      cur = std::move(a);
    }
  }
  return cur;
}

Matrix mlp_backward(const Mlp& mlp, const MlpCache& cache, const Matrix& d_out, MlpGrad& grad) {
  Matrix d_a = d_out;
  for (std::size_t idx = mlp.layers.size(); idx-- > 0;) {
    const Matrix& input = cache.inputs[idx];
    grad.layers[idx].w.noalias() += d_a * input.transpose();
    grad.layers[idx].b += d_a.rowwise().sum();
    Matrix d_in = mlp.layers[idx].w.transpose() * d_a;
    if (idx > 0) {
      // ReLU mask: the input to this layer is the previous layer's output
      d_a = d_in.cwiseProduct((input.array() > 0.0).cast<double>().matrix());
    } else {
      d_a = std::move(d_in);
    }
  }
  return d_a;
}

Lstm Lstm::make(Eigen::Index in, Eigen::Index hidden, Rng& rng, double forget_bias) {
  Lstm lstm;
  lstm.wx.resize(4 * hidden, in);
  lstm.wh.resize(4 * hidden, hidden);
  init_uniform(lstm.wx, rng);
  init_uniform(lstm.wh, rng);
  lstm.b.setZero(4 * hidden);
  lstm.b.segment(hidden, hidden).setConstant(forget_bias);
  return lstm;
}

void lstm_forward_packed(const Lstm& lstm, const std::vector<Matrix>& x_steps, LstmCache& cache) {
  if (x_steps.empty()) throw std::invalid_argument("lstm_forward_packed: empty sequence");
  const Eigen::Index h = lstm.hidden();
  const auto steps = static_cast<Eigen::Index>(x_steps.size());

  cache.x = x_steps;
  cache.gates.resize(static_cast<std::size_t>(steps));
  cache.c.resize(static_cast<std::size_t>(steps));
  cache.tanh_c.resize(static_cast<std::size_t>(steps));
  cache.h.resize(static_cast<std::size_t>(steps));
  cache.active.resize(static_cast<std::size_t>(steps));

  for (Eigen::Index t = 0; t < steps; ++t) {
    const Matrix& x = cache.x[static_cast<std::size_t>(t)];
    const Eigen::Index n = x.cols();
    cache.active[static_cast<std::size_t>(t)] = n;
    if (t > 0 && n > cache.active[static_cast<std::size_t>(t - 1)]) {
      throw std::invalid_argument("lstm_forward_packed: active widths must not grow");
    }

    Matrix a = (lstm.wx * x).colwise() + lstm.b;
    if (t > 0) a.noalias() += lstm.wh * cache.h[static_cast<std::size_t>(t - 1)].leftCols(n);

    Matrix& g = cache.gates[static_cast<std::size_t>(t)];
    g.resize(4 * h, n);
    g.topRows(2 * h) = a.topRows(2 * h).unaryExpr([](double v) { return sigmoid(v); });
    g.middleRows(2 * h, h) = a.middleRows(2 * h, h).array().tanh();
    g.bottomRows(h) = a.bottomRows(h).unaryExpr([](double v) { return sigmoid(v); });

    Matrix& c = cache.c[static_cast<std::size_t>(t)];
    c = g.topRows(h).cwiseProduct(g.middleRows(2 * h, h));
    if (t > 0) {
      c.noalias() += g.middleRows(h, h).cwiseProduct(cache.c[static_cast<std::size_t>(t - 1)].leftCols(n));
    }
    cache.tanh_c[static_cast<std::size_t>(t)] = c.array().tanh();
    cache.h[static_cast<std::size_t>(t)] =
        g.bottomRows(h).cwiseProduct(cache.tanh_c[static_cast<std::size_t>(t)]);
  }
}

std::vector<Matrix> lstm_backward_packed(const Lstm& lstm, const LstmCache& cache,
                                         const Matrix& d_h_last,
                                         const std::vector<Eigen::Index>& lengths, LstmGrad& grad) {
  const Eigen::Index h = lstm.hidden();
  const auto steps = cache.steps();
  std::vector<Matrix> d_x(static_cast<std::size_t>(steps));

  Matrix d_h_carry, d_c_carry;  // h x active[t+1]
  for (Eigen::Index t = steps - 1; t >= 0; --t) {
    const Eigen::Index n = cache.active[static_cast<std::size_t>(t)];
    Matrix d_h = Matrix::Zero(h, n);
    Matrix d_c = Matrix::Zero(h, n);
    if (t + 1 < steps) {
      const Eigen::Index n_next = cache.active[static_cast<std::size_t>(t + 1)];
      d_h.leftCols(n_next) = d_h_carry;
      d_c.leftCols(n_next) = d_c_carry;
    }
    for (std::size_t s = 0; s < lengths.size(); ++s) {
      if (lengths[s] == t + 1) d_h.col(static_cast<Eigen::Index>(s)) += d_h_last.col(static_cast<Eigen::Index>(s));
    }

    const Matrix& g = cache.gates[static_cast<std::size_t>(t)];
    const Matrix& tc = cache.tanh_c[static_cast<std::size_t>(t)];
    const auto gate_i = g.topRows(h);
    const auto gate_f = g.middleRows(h, h);
    const auto gate_g = g.middleRows(2 * h, h);
    const auto gate_o = g.bottomRows(h);

    d_c += d_h.cwiseProduct(gate_o).cwiseProduct((1.0 - tc.array().square()).matrix());

    Matrix d_a(4 * h, n);
    // d(pre-activation) for i, f, g, o
    d_a.topRows(h) = d_c.cwiseProduct(gate_g).cwiseProduct(gate_i).cwiseProduct((1.0 - gate_i.array()).matrix());
    if (t > 0) {
      const auto c_prev = cache.c[static_cast<std::size_t>(t - 1)].leftCols(n);
      d_a.middleRows(h, h) =
          d_c.cwiseProduct(c_prev).cwiseProduct(gate_f).cwiseProduct((1.0 - gate_f.array()).matrix());
    } else {
      d_a.middleRows(h, h).setZero();  // c_{-1} == 0
    }
    d_a.middleRows(2 * h, h) = d_c.cwiseProduct(gate_i).cwiseProduct((1.0 - gate_g.array().square()).matrix());
    d_a.bottomRows(h) = d_h.cwiseProduct(tc).cwiseProduct(gate_o).cwiseProduct((1.0 - gate_o.array()).matrix());

    grad.wx.noalias() += d_a * cache.x[static_cast<std::size_t>(t)].transpose();
    if (t > 0) {
      grad.wh.noalias() += d_a * cache.h[static_cast<std::size_t>(t - 1)].leftCols(n).transpose();
    }
    grad.b += d_a.rowwise().sum();
    d_x[static_cast<std::size_t>(t)] = lstm.wx.transpose() * d_a;

    if (t > 0) {
      d_h_carry.noalias() = lstm.wh.transpose() * d_a;
      d_c_carry = d_c.cwiseProduct(gate_f);
    }
  }
  return d_x;
}

Matrix lstm_forward(const Lstm& lstm, const Matrix& x) {
  if (x.cols() == 0) throw std::invalid_argument("lstm_forward: empty sequence");
  std::vector<Matrix> steps(static_cast<std::size_t>(x.cols()));
  for (Eigen::Index t = 0; t < x.cols(); ++t) steps[static_cast<std::size_t>(t)] = x.col(t);
  LstmCache cache;
  lstm_forward_packed(lstm, steps, cache);
  Matrix out(lstm.hidden(), x.cols());
  for (Eigen::Index t = 0; t < x.cols(); ++t) out.col(t) = cache.h[static_cast<std::size_t>(t)];
  return out;
}

Vector l2_normalize(const Vector& x) {
  const double norm = std::sqrt(x.squaredNorm() + kL2Epsilon * kL2Epsilon);
  return x / norm;
}

Vector l2_normalize_backward(const Vector& x, const Vector& d_y) {
  const double n2 = x.squaredNorm() + kL2Epsilon * kL2Epsilon;
  const double norm = std::sqrt(n2);
  return d_y / norm - x * (x.dot(d_y) / (n2 * norm));
}

Adam::Adam(const std::vector<ParamRef>& params, AdamConfig config) : config_(config) {
  m_.reserve(params.size());
  v_.reserve(params.size());
  for (const ParamRef& p : params) {
    m_.push_back(Eigen::ArrayXd::Zero(p.size()));
    v_.push_back(Eigen::ArrayXd::Zero(p.size()));
  }
}

void Adam::step(const std::vector<ParamRef>& params, const std::vector<ParamRef>& grads) {
  if (params.size() != m_.size() || grads.size() != m_.size()) {
    throw std::invalid_argument("Adam::step: parameter list changed shape");
  }
  ++step_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto g = grads[i].flat();
    if (!g.isFinite().all()) {
      throw std::runtime_error("Adam::step: non-finite gradient in '" + params[i].name +
                               "' at step " + std::to_string(step_));
    }
    m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * g;
    v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * g.square();
    params[i].flat() -= config_.lr * (m_[i] / c1) / ((v_[i] / c2).sqrt() + config_.eps);
  }
}

GradCheckReport grad_check(const std::function<double()>& loss,
                           const std::vector<ParamRef>& params,
                           const std::vector<ParamRef>& analytic,
                           const GradCheckOptions& options) {
  GradCheckReport report;
  const double h = options.step;
  const double f0 = loss();
  Rng rng(options.seed);

  for (std::size_t p = 0; p < params.size(); ++p) {
    const auto total = static_cast<std::int64_t>(params[p].size());
    std::vector<std::int64_t> coords;
    if (options.max_coords_per_tensor > 0 && total > options.max_coords_per_tensor) {
      coords.reserve(static_cast<std::size_t>(options.max_coords_per_tensor));
      for (int i = 0; i < options.max_coords_per_tensor; ++i) coords.push_back(rng.below(total));
    } else {
      coords.resize(static_cast<std::size_t>(total));
      for (std::int64_t i = 0; i < total; ++i) coords[static_cast<std::size_t>(i)] = i;
    }

    for (auto idx : coords) {
      double* slot = params[p].data + idx;
      const double saved = *slot;
      *slot = saved + h;
      const double fp = loss();
      *slot = saved - h;
      const double fm = loss();
      *slot = saved + 0.5 * h;
      const double fp2 = loss();
      *slot = saved - 0.5 * h;
      const double fm2 = loss();
      *slot = saved;

      const double numeric = (fp - fm) / (2.0 * h);
      const double a = analytic[p].data[idx];

      // a ReLU/hinge kink inside the probe window shows up two ways: the
      // one-sided slope jump does not shrink when the step halves (smooth
      // curvature halves it), or the central estimate fails to converge
      const double half = (fp2 - fm2) / h;
      const double jump_h = std::abs((fp - f0) - (f0 - fm)) / h;
      const double jump_h2 = std::abs((fp2 - f0) - (f0 - fm2)) / (0.5 * h);
      const bool sided_kink = jump_h > 1e-8 && jump_h2 > 0.6 * jump_h;
      const bool scale_kink =
          std::abs(numeric - half) >
              std::max(1e-8, 1e-3 * std::max({std::abs(numeric), std::abs(half), std::abs(a)}));
      if (sided_kink || scale_kink) {
        ++report.excluded;
        continue;
      }
      ++report.checked;
      if (std::abs(a) <= options.zero_tolerance && std::abs(numeric) <= options.zero_tolerance) {
        continue;
      }
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param = params[p].name;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace rnml::nn
