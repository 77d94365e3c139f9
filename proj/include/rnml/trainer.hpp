#ifndef RNML_TRAINER_HPP
#define RNML_TRAINER_HPP

#include "rnml/datagen.hpp"
#include "rnml/metric.hpp"
#include "rnml/similarity.hpp"
#include "rnml/wdr.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace rnml::trainer {

struct LogRow {
  std::int64_t step = 0;
  std::string split;
  double mape = 0.0, mae = 0.0, rmse = 0.0, l_main = 0.0, l_aux = 0.0;
};

struct TrainConfig {
  int batch_size = 256;
  double lr = 2e-4;
  std::int64_t max_steps = 20000;
  double beta = 0.52;  // rnml task weight; ignored by the other variants
  std::uint64_t seed = 0;
  wdr::Variant variant = wdr::Variant::wdr;
  std::int64_t eval_every = 500;
  int patience = 10;  // early stop after this many non-improving evals; 0 disables
  double clip_norm = 5.0;
  std::int64_t log_every = 100;
  metric::TriangleConfig aux;
  Eigen::Index hidden = 128;
  Eigen::Index link_emb_dim = 20;
  std::function<void(const LogRow&)> on_log;  // streamed as rows are produced
};

// Eq.-style mean absolute percentage error; targets must be positive.
double mape_loss(const Vector& pred, const Vector& target);
// dL/dpred (sign subgradient at pred == target is 0).
Vector mape_loss_backward(const Vector& pred, const Vector& target);

// Seeded epoch shuffle, then length bucketing inside pools of 8 batches so
// padding stays small, then a shuffle of the batch order. Deterministic in
// (seed, epoch); every index appears exactly once.
std::vector<std::vector<std::size_t>> make_batches(const std::vector<Eigen::Index>& lengths,
                                                   int batch_size, std::uint64_t seed,
                                                   std::int64_t epoch);

struct Batch {
  std::vector<wdr::TripFeatures> features;  // sorted by descending length
  Vector targets;
  std::vector<std::int32_t> distinct_links;  // 1-based, ascending
};

Batch assemble_batch(const std::vector<Trip>& trips, const std::vector<std::size_t>& indices,
                     const LinkCatalog& catalog, const wdr::FeatureScalers& scalers,
                     const wdr::SpeedProvider& speeds, const TimeBinSchedule& schedule);

std::string log_row_csv(const LogRow& row);
void write_log_csv(const std::vector<LogRow>& rows, const std::string& path);

struct TrainResult {
  wdr::Checkpoint best;
  double best_valid_mape = 0.0;
  std::int64_t best_step = 0;
  std::int64_t steps_run = 0;
  std::int64_t clip_events = 0;
  bool aborted = false;
  std::string abort_reason;
  std::vector<LogRow> log;
};

// Multi-task loop: per batch, MAPE on the predictions plus the triangle loss
// on sampled triangles, combined as (1-beta)*main + beta*aux, one Adam step
// over all parameters jointly. Keeps the best-on-validation model. `q` is
// required for the rnml variant.
TrainResult train(const TrainConfig& config, const DatasetSplit& data, const LinkCatalog& catalog,
                  const DifferenceMatrix* q);

}  // namespace rnml::trainer

#endif  // RNML_TRAINER_HPP
