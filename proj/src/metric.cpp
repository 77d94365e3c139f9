#include "rnml/metric.hpp"

#include "rnml/nn.hpp"

#include <algorithm>

namespace rnml::metric {

bool relabel_triangle(std::int32_t a, std::int32_t b, std::int32_t c, const DifferenceMatrix& q,
                      TriangleSample& out) {
  struct Pair {
    std::int32_t x, y;
    double value;
  };
  std::array<Pair, 3> pairs{Pair{a, b, q.lookup(a, b)}, Pair{b, c, q.lookup(b, c)},
                            Pair{a, c, q.lookup(a, c)}};
  std::sort(pairs.begin(), pairs.end(), [](const Pair& p, const Pair& r) { return p.value < r.value; });
  if (pairs[0].value == pairs[1].value || pairs[1].value == pairs[2].value) return false;

  // the middle link lj is shared by the smallest and middle pair
  const std::int32_t lj = (pairs[0].x == pairs[1].x || pairs[0].x == pairs[1].y) ? pairs[0].x
                                                                                 : pairs[0].y;
  const std::int32_t li = pairs[0].x == lj ? pairs[0].y : pairs[0].x;
  const std::int32_t lk = pairs[1].x == lj ? pairs[1].y : pairs[1].x;
  out = TriangleSample{li, lj, lk, pairs[0].value, pairs[1].value, pairs[2].value};
  return true;
}

std::vector<TriangleSample> sample_triangles(const std::vector<std::int32_t>& links,
                                             const DifferenceMatrix& q, int count, Rng& rng) {
  std::vector<TriangleSample> samples;
  const auto n = static_cast<std::int64_t>(links.size());
  if (n < 3 || count <= 0) return samples;
  samples.reserve(static_cast<std::size_t>(count));

  std::int64_t attempts_left = 10ll * count;
  while (static_cast<int>(samples.size()) < count && attempts_left > 0) {
    --attempts_left;
    // three distinct indices, uniform without replacement
    const auto i1 = rng.below(n);
    auto i2 = rng.below(n - 1);
    if (i2 >= i1) ++i2;
    auto i3 = rng.below(n - 2);
    if (i3 >= std::min(i1, i2)) ++i3;
    if (i3 >= std::max(i1, i2)) ++i3;

    TriangleSample sample;
    if (relabel_triangle(links[static_cast<std::size_t>(i1)], links[static_cast<std::size_t>(i2)],
                         links[static_cast<std::size_t>(i3)], q, sample)) {
      samples.push_back(sample);
    }
  }
  return samples;
}

double embedding_distance(const Matrix& table, std::int32_t a, std::int32_t b) {
  if (a < 1 || a > table.cols() || b < 1 || b > table.cols()) {
    throw std::invalid_argument("embedding_distance: link id outside table");
  }
  const Vector na = nn::l2_normalize(table.col(a - 1));
  const Vector nb = nn::l2_normalize(table.col(b - 1));
  return (na - nb).norm();
}

double triangle_loss(const Matrix& table, const std::vector<TriangleSample>& samples,
                     const TriangleConfig& config, Matrix* grad) {
  if (samples.empty()) return 0.0;
  const double inv_u = 1.0 / static_cast<double>(samples.size());
  double loss = 0.0;

  for (const TriangleSample& s : samples) {
    const Vector xi = table.col(s.li - 1);
    const Vector xj = table.col(s.lj - 1);
    const Vector xk = table.col(s.lk - 1);
    const Vector ni = nn::l2_normalize(xi);
    const Vector nj = nn::l2_normalize(xj);
    const Vector nk = nn::l2_normalize(xk);

    const double d2_ij = (ni - nj).squaredNorm();
    const double d2_jk = (nj - nk).squaredNorm();
    const double d2_ik = (ni - nk).squaredNorm();

    const double t1 = d2_ij - d2_jk + config.margins[0];
    const double t2 = d2_ij - d2_ik + config.margins[1];
    const double t3 = d2_jk - d2_ik + config.margins[2];

    loss += config.gammas[0] * std::max(t1, 0.0) + config.gammas[1] * std::max(t2, 0.0) +
            config.gammas[2] * std::max(t3, 0.0);
    if (!grad) continue;

    const double w1 = t1 > 0.0 ? config.gammas[0] * inv_u : 0.0;
    const double w2 = t2 > 0.0 ? config.gammas[1] * inv_u : 0.0;
    const double w3 = t3 > 0.0 ? config.gammas[2] * inv_u : 0.0;
    if (w1 == 0.0 && w2 == 0.0 && w3 == 0.0) continue;

    // dL/d(d2_ij) etc., then chain through the squared distances and the
    // normalization back to the raw columns
    const double g_ij = w1 + w2;
    const double g_jk = -w1 + w3;
    const double g_ik = -w2 - w3;

    Vector d_ni = 2.0 * g_ij * (ni - nj) + 2.0 * g_ik * (ni - nk);
    Vector d_nj = 2.0 * g_ij * (nj - ni) + 2.0 * g_jk * (nj - nk);
    Vector d_nk = 2.0 * g_jk * (nk - nj) + 2.0 * g_ik * (nk - ni);

    grad->col(s.li - 1) += nn::l2_normalize_backward(xi, d_ni);
    grad->col(s.lj - 1) += nn::l2_normalize_backward(xj, d_nj);
    grad->col(s.lk - 1) += nn::l2_normalize_backward(xk, d_nk);
  }
  return loss * inv_u;
}

}  // namespace rnml::metric
