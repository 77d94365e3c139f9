#include "doctest.h"

#include "rnml/metric.hpp"
#include "rnml/nn.hpp"
#include "test_util.hpp"

#include <Eigen/QR>

using namespace rnml;
using namespace rnml::metric;

namespace {

// K=1 histograms make Q_ij = |v_i - v_j|, handy for pinning exact Q values.
DifferenceMatrix q_from_scalars(const std::vector<double>& values) {
  std::vector<SpeedHistogram> histograms;
  for (std::size_t i = 0; i < values.size(); ++i) {
    SpeedHistogram h;
    h.link_id = static_cast<std::int32_t>(i + 1);
    h.values = {values[i]};
    h.support = {1};
    h.imputed = {false};
    histograms.push_back(std::move(h));
  }
  return DifferenceMatrix::build(histograms);
}

// three unit vectors with prescribed pairwise squared distances
Matrix embeddings_with_d2(double d2_ij, double d2_jk, double d2_ik) {
  const double cos_ij = 1.0 - d2_ij / 2.0;
  const double cos_jk = 1.0 - d2_jk / 2.0;
  const double cos_ik = 1.0 - d2_ik / 2.0;
  const double a = std::acos(cos_ij);
  const double b = std::acos(cos_ik);
  const double cos_phi = (cos_jk - std::cos(a) * std::cos(b)) / (std::sin(a) * std::sin(b));
  Matrix table(3, 3);
  table.col(0) << 1.0, 0.0, 0.0;
  table.col(1) << std::cos(a), std::sin(a), 0.0;
  table.col(2) << std::cos(b), std::sin(b) * cos_phi,
      std::sin(b) * std::sqrt(std::max(0.0, 1.0 - cos_phi * cos_phi));
  return table;
}

}  // namespace

TEST_CASE("sample_triangles: the unique triple of a 3-link batch, relabeled by Q order") {
  const auto q = q_from_scalars({0.0, 0.1, 0.3});  // Q12=0.1, Q23=0.2, Q13=0.3
  Rng rng(5);
  const auto samples = sample_triangles({1, 2, 3}, q, 1, rng);
  REQUIRE(samples.size() == 1);
  const auto& s = samples[0];
  CHECK(s.q_ij == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(s.q_jk == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(s.q_ik == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(s.li == 1);
  CHECK(s.lj == 2);
  CHECK(s.lk == 3);
}

TEST_CASE("relabeling is canonical for every input order") {
  const auto q = q_from_scalars({0.0, 0.1, 0.3});
  const std::array<std::array<std::int32_t, 3>, 6> orders{
      {{1, 2, 3}, {1, 3, 2}, {2, 1, 3}, {2, 3, 1}, {3, 1, 2}, {3, 2, 1}}};
  for (const auto& o : orders) {
    TriangleSample s;
    REQUIRE(relabel_triangle(o[0], o[1], o[2], q, s));
    CHECK(s.li == 1);
    CHECK(s.lj == 2);
    CHECK(s.lk == 3);
  }
}

TEST_CASE("ties are discarded: all-equal histograms sample nothing") {
  const auto q = q_from_scalars({0.5, 0.5, 0.5, 0.5});
  Rng rng(6);
  const auto samples = sample_triangles({1, 2, 3, 4}, q, 8, rng);
  CHECK(samples.empty());
  CHECK(triangle_loss(Matrix::Random(4, 4), samples, TriangleConfig{}) == 0.0);
}

TEST_CASE("fewer than 3 distinct links skips the auxiliary loss") {
  const auto q = q_from_scalars({0.0, 0.5});
  Rng rng(7);
  CHECK(sample_triangles({1, 2}, q, 4, rng).empty());
}

TEST_CASE("embedding_distance geometry") {
  Matrix table(3, 4);
  table.col(0) << 2.0, 0.0, 0.0;
  table.col(1) << 5.0, 0.0, 0.0;   // same direction
  table.col(2) << -3.0, 0.0, 0.0;  // antipodal
  table.col(3) << 0.0, 7.0, 0.0;   // orthogonal
  CHECK(embedding_distance(table, 1, 2) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(embedding_distance(table, 1, 3) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(embedding_distance(table, 1, 4) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
  CHECK_THROWS_AS(embedding_distance(table, 0, 1), std::invalid_argument);
}

TEST_CASE("triangle loss: satisfied triple is exactly zero with zero gradient") {
  const Matrix table = embeddings_with_d2(0.1, 0.2, 0.3);
  std::vector<TriangleSample> samples{{1, 2, 3, 0.1, 0.2, 0.3}};
  Matrix grad = Matrix::Zero(3, 3);
  const double loss = triangle_loss(table, samples, TriangleConfig{}, &grad);
  CHECK(loss == 0.0);
  CHECK(grad.isZero(0.0));
}

TEST_CASE("triangle loss: hand-evaluated violated triple") {
  const Matrix table = embeddings_with_d2(0.3, 0.2, 0.1);
  std::vector<TriangleSample> samples{{1, 2, 3, 0.1, 0.2, 0.3}};
  const double loss = triangle_loss(table, samples, TriangleConfig{});
  // 0.3*0.105 + 0.4*0.22 + 0.3*0.105
  CHECK(loss == doctest::Approx(0.151).epsilon(1e-9));
}

TEST_CASE("triangle loss gradient matches finite differences away from kinks") {
  Rng rng(11);
  Matrix table(20, 5);
  nn::init_uniform(table, rng);
  const auto q = q_from_scalars({0.0, 0.2, 0.5, 0.7, 0.9});
  const auto samples = sample_triangles({1, 2, 3, 4, 5}, q, 4, rng);
  REQUIRE(!samples.empty());
  TriangleConfig config;

  auto loss = [&] { return triangle_loss(table, samples, config); };
  Matrix analytic = Matrix::Zero(20, 5);
  triangle_loss(table, samples, config, &analytic);

  const auto report =
      nn::grad_check(loss, {nn::param_ref("table", table)}, {nn::param_ref("g", analytic)});
  CHECK(report.max_rel_error < 1e-5);
}

TEST_CASE("triangle loss is non-negative and empty samples cost nothing") {
  Rng rng(13);
  Matrix table(8, 6);
  nn::init_uniform(table, rng);
  CHECK(triangle_loss(table, {}, TriangleConfig{}) == 0.0);

  const auto q = q_from_scalars({0.0, 0.15, 0.35, 0.6, 0.8, 0.95});
  for (int trial = 0; trial < 20; ++trial) {
    const auto samples = sample_triangles({1, 2, 3, 4, 5, 6}, q, 6, rng);
    CHECK(triangle_loss(table, samples, TriangleConfig{}) >= 0.0);
  }
}

TEST_CASE("loss value is invariant to the input order of the three links") {
  Rng rng(17);
  Matrix table(10, 3);
  nn::init_uniform(table, rng);
  const auto q = q_from_scalars({0.0, 0.1, 0.3});
  const std::array<std::array<std::int32_t, 3>, 6> orders{
      {{1, 2, 3}, {1, 3, 2}, {2, 1, 3}, {2, 3, 1}, {3, 1, 2}, {3, 2, 1}}};
  double reference = -1.0;
  for (const auto& o : orders) {
    TriangleSample s;
    REQUIRE(relabel_triangle(o[0], o[1], o[2], q, s));
    const double loss = triangle_loss(table, {s}, TriangleConfig{});
    if (reference < 0) reference = loss;
    CHECK(loss == doctest::Approx(reference).epsilon(1e-15));
  }
}

TEST_CASE("one orthogonal transform of all embeddings preserves the loss") {
  Rng rng(19);
  Matrix table(20, 8);
  nn::init_uniform(table, rng);
  Matrix gaussian(20, 20);
  for (Eigen::Index j = 0; j < 20; ++j) {
    for (Eigen::Index i = 0; i < 20; ++i) gaussian(i, j) = rng.normal();
  }
  const Matrix rotation = Eigen::HouseholderQR<Matrix>(gaussian).householderQ();

  const auto q = q_from_scalars({0.0, 0.1, 0.25, 0.45, 0.6, 0.75, 0.85, 0.95});
  const auto samples = sample_triangles({1, 2, 3, 4, 5, 6, 7, 8}, q, 12, rng);
  REQUIRE(!samples.empty());

  const double before = triangle_loss(table, samples, TriangleConfig{});
  const Matrix rotated = rotation * table;
  const double after = triangle_loss(rotated, samples, TriangleConfig{});
  CHECK(std::abs(before - after) <= 1e-9);
}

TEST_CASE("gradient flows only into sampled columns") {
  Rng rng(23);
  Matrix table(6, 10);
  nn::init_uniform(table, rng);
  // squared distances of unit vectors stay below 4, so these margins force
  // every hinge active
  TriangleConfig config;
  config.margins = {4.1, 4.1, 4.1};
  std::vector<TriangleSample> samples{{2, 5, 9, 0.1, 0.2, 0.3}};
  Matrix grad = Matrix::Zero(6, 10);
  const double loss = triangle_loss(table, samples, config, &grad);
  CHECK(loss > 0.0);
  for (std::int32_t col = 0; col < 10; ++col) {
    const bool sampled = col == 1 || col == 4 || col == 8;
    CHECK(grad.col(col).isZero(0.0) == !sampled);
  }
}

TEST_CASE("combined_loss follows the convex combination") {
  CHECK(combined_loss(0.7, 123.0, 0.0) == 0.7);
  CHECK(combined_loss(123.0, 0.9, 1.0) == 0.9);
  CHECK(combined_loss(0.2, 0.1, 0.52) == doctest::Approx(0.148).epsilon(1e-12));
  CHECK_THROWS_AS(combined_loss(1.0, 1.0, -0.1), std::invalid_argument);
  CHECK_THROWS_AS(combined_loss(1.0, 1.0, 1.1), std::invalid_argument);
}
