#include "doctest.h"

#include "rnml/checkpoint.hpp"
#include "rnml/nn.hpp"
#include "test_util.hpp"

using namespace rnml;
using namespace rnml::nn;

TEST_CASE("embed_lookup copies columns and validates ids") {
  Matrix table(2, 3);
  table << 1, 0, 5, 0, 1, 7;
  const Matrix out = embed_lookup(table, {2});
  CHECK(out.col(0) == table.col(2));

  const Matrix two = embed_lookup(table, {1, 1});
  CHECK(two.col(0) == table.col(1));
  CHECK(two.col(1) == table.col(1));

  Matrix grad = Matrix::Zero(2, 3);
  Matrix d_out(2, 2);
  d_out << 1, 2, 3, 4;
  embed_backward({1, 1}, d_out, grad);
  CHECK(grad(0, 1) == 3.0);
  CHECK(grad(1, 1) == 7.0);
  CHECK(grad.col(0).isZero());
  CHECK(grad.col(2).isZero());

  CHECK_THROWS_AS(embed_lookup(table, {3}), std::invalid_argument);
  CHECK_THROWS_AS(embed_lookup(table, {-1}), std::invalid_argument);
}

TEST_CASE("embed_lookup gradient matches finite differences") {
  Rng rng(100);
  Matrix table(4, 5);
  init_uniform(table, rng);
  Matrix weights(4, 3);
  init_uniform(weights, rng, 1.0);
  const std::vector<std::int32_t> ids{1, 4, 1};

  auto loss = [&] { return embed_lookup(table, ids).cwiseProduct(weights).sum(); };
  Matrix analytic = Matrix::Zero(4, 5);
  embed_backward(ids, weights, analytic);

  const auto report = grad_check(loss, {param_ref("table", table)}, {param_ref("g", analytic)});
  CHECK(report.max_rel_error < 1e-6);
  CHECK(report.excluded == 0);
}

TEST_CASE("lstm: zero weights and inputs give zero hidden states") {
  Lstm lstm;
  lstm.wx = Matrix::Zero(4 * 4, 3);
  lstm.wh = Matrix::Zero(4 * 4, 4);
  lstm.b = Vector::Zero(4 * 4);
  const Matrix h = lstm_forward(lstm, Matrix::Zero(3, 5));
  CHECK(h.isZero(0.0));
}

TEST_CASE("lstm: a length-1 sequence equals one cell application") {
  Rng rng(7);
  Lstm lstm = Lstm::make(3, 4, rng);
  Vector x(3);
  x << 0.3, -0.2, 0.9;

  const Matrix h = lstm_forward(lstm, x);

  // hand-rolled single cell
  Vector a = lstm.wx * x + lstm.b;
  const auto hidden = 4;
  Vector gate_i(hidden), gate_f(hidden), gate_g(hidden), gate_o(hidden);
  for (int r = 0; r < hidden; ++r) {
    gate_i(r) = sigmoid(a(r));
    gate_f(r) = sigmoid(a(hidden + r));
    gate_g(r) = std::tanh(a(2 * hidden + r));
    gate_o(r) = sigmoid(a(3 * hidden + r));
  }
  const Vector c = gate_i.cwiseProduct(gate_g);
  const Vector expect = gate_o.cwiseProduct(c.array().tanh().matrix());
  CHECK((h.col(0) - expect).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("lstm rejects an empty sequence") {
  Rng rng(7);
  Lstm lstm = Lstm::make(3, 4, rng);
  CHECK_THROWS_AS(lstm_forward(lstm, Matrix(3, 0)), std::invalid_argument);
}

TEST_CASE("lstm gradients match finite differences on a 3-step instance") {
  Rng rng(42);
  Lstm lstm = Lstm::make(5, 8, rng);
  Matrix x(5, 3);
  init_uniform(x, rng, 1.0);
  Matrix weights(8, 1);
  init_uniform(weights, rng, 1.0);

  auto loss = [&] {
    const Matrix h = lstm_forward(lstm, x);
    return (weights.transpose() * h.col(2))(0, 0);
  };

  LstmGrad grad;
  grad.resize_like(lstm);
  {
    std::vector<Matrix> steps{x.col(0), x.col(1), x.col(2)};
    LstmCache cache;
    lstm_forward_packed(lstm, steps, cache);
    lstm_backward_packed(lstm, cache, weights, {3}, grad);
  }

  const auto report = grad_check(
      loss,
      {param_ref("wx", lstm.wx), param_ref("wh", lstm.wh), param_ref("b", lstm.b)},
      {param_ref("d_wx", grad.wx), param_ref("d_wh", grad.wh), param_ref("d_b", grad.b)});
  CHECK(report.max_rel_error < 1e-4);
}

TEST_CASE("lstm packed backward returns per-step input gradients") {
  Rng rng(43);
  Lstm lstm = Lstm::make(4, 6, rng);
  std::vector<Matrix> steps;
  Matrix x0(4, 2), x1(4, 1);
  init_uniform(x0, rng, 1.0);
  init_uniform(x1, rng, 1.0);
  steps.push_back(x0);
  steps.push_back(x1);

  LstmCache cache;
  lstm_forward_packed(lstm, steps, cache);
  LstmGrad grad;
  grad.resize_like(lstm);
  Matrix d_last = Matrix::Ones(6, 2);
  const auto d_x = lstm_backward_packed(lstm, cache, d_last, {2, 1}, grad);
  REQUIRE(d_x.size() == 2);
  CHECK(d_x[0].cols() == 2);
  CHECK(d_x[1].cols() == 1);

  // finite-difference on one input coordinate
  auto loss = [&] {
    LstmCache c;
    lstm_forward_packed(lstm, steps, c);
    return c.h[1].col(0).sum() + c.h[0].col(1).sum();
  };
  const double f0 = loss();
  const double h = 1e-6;
  steps[0](1, 0) += h;
  const double f1 = loss();
  steps[0](1, 0) -= h;
  CHECK(d_x[0](1, 0) == doctest::Approx((f1 - f0) / h).epsilon(1e-4));
  (void)f0;
}

TEST_CASE("mlp: identity weights pass non-negative input through") {
  Mlp mlp;
  mlp.layers.resize(2);
  mlp.layers[0].w = Matrix::Identity(3, 3);
  mlp.layers[0].b = Vector::Zero(3);
  mlp.layers[1].w = Matrix::Identity(3, 3);
  mlp.layers[1].b = Vector::Zero(3);

  Vector x(3);
  x << 0.5, 0.0, 2.0;
  const Matrix y = mlp_forward(mlp, x);
  CHECK((y.col(0) - x).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("mlp: negative pre-activation is exactly zero after ReLU") {
  Mlp mlp;
  mlp.layers.resize(2);
  mlp.layers[0].w = -Matrix::Identity(2, 2);
  mlp.layers[0].b = Vector::Zero(2);
  mlp.layers[1].w = Matrix::Identity(2, 2);
  mlp.layers[1].b = Vector::Zero(2);

  Vector x(2);
  x << 1.0, 3.0;
  const Matrix y = mlp_forward(mlp, x);
  CHECK(y(0, 0) == 0.0);
  CHECK(y(1, 0) == 0.0);
}

TEST_CASE("mlp gradients match finite differences") {
  Rng rng(11);
  Mlp mlp = Mlp::make({4, 8, 8, 2}, rng);
  Matrix x(4, 3);
  init_uniform(x, rng, 1.0);
  Matrix weights(2, 3);
  init_uniform(weights, rng, 1.0);

  auto loss = [&] { return mlp_forward(mlp, x).cwiseProduct(weights).sum(); };

  MlpCache cache;
  mlp_forward(mlp, x, &cache);
  MlpGrad grad;
  grad.resize_like(mlp);
  mlp_backward(mlp, cache, weights, grad);

  std::vector<ParamRef> params, analytic;
  for (std::size_t i = 0; i < mlp.layers.size(); ++i) {
    params.push_back(param_ref("w" + std::to_string(i), mlp.layers[i].w));
    params.push_back(param_ref("b" + std::to_string(i), mlp.layers[i].b));
    analytic.push_back(param_ref("dw", grad.layers[i].w));
    analytic.push_back(param_ref("db", grad.layers[i].b));
  }
  const auto report = grad_check(loss, params, analytic);
  CHECK(report.max_rel_error < 1e-6);
}

TEST_CASE("l2_normalize basics") {
  Vector x(2);
  x << 3.0, 4.0;
  const Vector y = l2_normalize(x);
  CHECK(y(0) == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(y(1) == doctest::Approx(0.8).epsilon(1e-12));

  Vector unit(3);
  unit << 0.0, 1.0, 0.0;
  CHECK((l2_normalize(unit) - unit).norm() < 1e-12);

  Vector small = Vector::Constant(4, 1e-3);
  CHECK(std::abs(l2_normalize(small).norm() - 1.0) < 1e-12);

  const Vector zero = Vector::Zero(4);
  CHECK(l2_normalize(zero).allFinite());
  CHECK(l2_normalize_backward(zero, Vector::Ones(4)).allFinite());
}

TEST_CASE("l2_normalize gradient matches finite differences") {
  Rng rng(19);
  Matrix x(6, 1);
  init_uniform(x, rng, 0.5);
  Matrix weights(6, 1);
  init_uniform(weights, rng, 1.0);

  auto loss = [&] { return l2_normalize(x.col(0)).dot(weights.col(0)); };
  Matrix analytic = l2_normalize_backward(x.col(0), weights.col(0));
  const auto report = grad_check(loss, {param_ref("x", x)}, {param_ref("dx", analytic)});
  CHECK(report.max_rel_error < 1e-6);
}

TEST_CASE("adam: zero gradient from a fresh state leaves parameters unchanged") {
  Matrix p(2, 2);
  p << 1, 2, 3, 4;
  const Matrix before = p;
  Matrix g = Matrix::Zero(2, 2);
  Adam adam({param_ref("p", p)}, AdamConfig{});
  adam.step({param_ref("p", p)}, {param_ref("g", g)});
  CHECK(p == before);
}

TEST_CASE("adam: first step moves by about lr in the gradient's sign") {
  Matrix p = Matrix::Zero(1, 3);
  Matrix g(1, 3);
  g << 0.5, -2.0, 1e-3;
  const AdamConfig config{2e-4, 0.9, 0.999, 1e-8};
  Adam adam({param_ref("p", p)}, config);
  adam.step({param_ref("p", p)}, {param_ref("g", g)});
  for (int i = 0; i < 3; ++i) {
    const double expect = -config.lr * (g(0, i) > 0 ? 1.0 : -1.0);
    CHECK(p(0, i) == doctest::Approx(expect).epsilon(1e-4));
  }
}

TEST_CASE("adam: identical calls from identical state coincide") {
  Rng rng(23);
  Matrix p1(3, 3), g(3, 3);
  init_uniform(p1, rng);
  init_uniform(g, rng);
  Matrix p2 = p1;

  Adam a1({param_ref("p", p1)}, AdamConfig{});
  Adam a2({param_ref("p", p2)}, AdamConfig{});
  for (int i = 0; i < 5; ++i) {
    a1.step({param_ref("p", p1)}, {param_ref("g", g)});
    a2.step({param_ref("p", p2)}, {param_ref("g", g)});
  }
  CHECK(p1 == p2);
}

TEST_CASE("adam: lr = 0 is the identity") {
  Rng rng(29);
  Matrix p(4, 4), g(4, 4);
  init_uniform(p, rng);
  const Matrix before = p;
  Adam adam({param_ref("p", p)}, AdamConfig{0.0, 0.9, 0.999, 1e-8});
  for (int i = 0; i < 3; ++i) {
    init_uniform(g, rng);
    adam.step({param_ref("p", p)}, {param_ref("g", g)});
  }
  CHECK(p == before);
}

TEST_CASE("adam: non-finite gradients abort with the tensor name") {
  Matrix p = Matrix::Zero(2, 2);
  Matrix g = Matrix::Zero(2, 2);
  g(1, 1) = std::numeric_limits<double>::quiet_NaN();
  Adam adam({param_ref("lstm/wx", p)}, AdamConfig{});
  try {
    adam.step({param_ref("lstm/wx", p)}, {param_ref("g", g)});
    FAIL("expected throw");
  } catch (const std::runtime_error& e) {
    const std::string what = e.what();
    CHECK(what.find("lstm/wx") != std::string::npos);
    CHECK(what.find("step 1") != std::string::npos);
  }
}

TEST_CASE("grad_check: analytic quadratic is exact to step squared") {
  Matrix p(3, 1);
  p << 0.4, -1.2, 2.0;
  auto loss = [&] { return 0.5 * p.squaredNorm(); };
  Matrix analytic = p;
  const auto report = grad_check(loss, {param_ref("p", p)}, {param_ref("g", analytic)});
  CHECK(report.max_rel_error < 1e-9);
  CHECK(report.excluded == 0);
}

TEST_CASE("grad_check: a ReLU kink is reported as excluded") {
  Matrix p(1, 1);
  p(0, 0) = 0.0;  // sits exactly on the kink
  auto loss = [&] { return std::max(p(0, 0), 0.0) * 3.0; };
  Matrix analytic = Matrix::Zero(1, 1);
  const auto report = grad_check(loss, {param_ref("p", p)}, {param_ref("g", analytic)});
  CHECK(report.excluded == 1);
  CHECK(report.checked == 0);
}

TEST_CASE("checkpoint round-trips named tensors") {
  Rng rng(37);
  Matrix a(3, 4), b(5, 1);
  init_uniform(a, rng);
  init_uniform(b, rng);
  const auto dir = test::tmp_dir("ckpt");
  save_checkpoint((dir / "c.bin").string(), {{"block/a", a}, {"block/b", b}});

  const auto raw = test::slurp(dir / "c.bin");
  CHECK(raw.substr(0, 8) == "RNMLCKPT");

  const auto tensors = load_checkpoint((dir / "c.bin").string());
  REQUIRE(tensors.size() == 2);
  CHECK(find_tensor(tensors, "block/a") == a);
  CHECK(find_tensor(tensors, "block/b") == b);
  CHECK(find_tensor_opt(tensors, "missing") == nullptr);
  CHECK_THROWS_AS(find_tensor(tensors, "missing"), data_error);
}

TEST_CASE("checkpoint rejects a bad magic") {
  const auto dir = test::tmp_dir("ckpt_bad");
  {
    std::ofstream out(dir / "bad.bin", std::ios::binary);
    out << "NOTMAGIC garbage";
  }
  CHECK_THROWS_AS(load_checkpoint((dir / "bad.bin").string()), data_error);
}
