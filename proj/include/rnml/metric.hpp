#ifndef RNML_METRIC_HPP
#define RNML_METRIC_HPP

#include "rnml/core.hpp"
#include "rnml/similarity.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace rnml::metric {

// Links relabeled so that q_ij < q_jk < q_ik holds strictly.
struct TriangleSample {
  std::int32_t li = 0, lj = 0, lk = 0;  // 1-based link ids
  double q_ij = 0.0, q_jk = 0.0, q_ik = 0.0;
};

struct TriangleConfig {
  std::array<double, 3> margins{0.005, 0.02, 0.005};
  std::array<double, 3> gammas{0.3, 0.4, 0.3};
  int triangles_per_batch = 256;
};

// Uniform triples over the batch's distinct links; triples whose three Q
// values tie are discarded and redrawn, up to 10*count attempts. Fewer than 3
// distinct links yields an empty sample (the auxiliary loss is skipped).
std::vector<TriangleSample> sample_triangles(const std::vector<std::int32_t>& links,
                                             const DifferenceMatrix& q, int count, Rng& rng);

// Canonical relabeling of one triple; false on Q ties.
bool relabel_triangle(std::int32_t a, std::int32_t b, std::int32_t c, const DifferenceMatrix& q,
                      TriangleSample& out);

// Euclidean distance between the L2-normalized embedding columns of links a
// and b (1-based); lands in [0, 2].
double embedding_distance(const Matrix& table, std::int32_t a, std::int32_t b);

// Mean hinge loss over the samples; if grad is non-null the gradient w.r.t.
// the (unnormalized) embedding table is accumulated into it.
double triangle_loss(const Matrix& table, const std::vector<TriangleSample>& samples,
                     const TriangleConfig& config, Matrix* grad = nullptr);

// (1 - beta) * main + beta * aux
inline double combined_loss(double l_main, double l_aux, double beta) {
  if (beta < 0.0 || beta > 1.0) throw std::invalid_argument("combined_loss: beta outside [0, 1]");
  return (1.0 - beta) * l_main + beta * l_aux;
}

}  // namespace rnml::metric

#endif  // RNML_METRIC_HPP
