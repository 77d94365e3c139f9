#ifndef RNML_WDR_HPP
#define RNML_WDR_HPP

#include "rnml/checkpoint.hpp"
#include "rnml/datagen.hpp"
#include "rnml/nn.hpp"
#include "rnml/similarity.hpp"

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace rnml::wdr {

enum class Variant { route_eta, wdr, wdr_nolink, rnml };

std::string variant_name(Variant v);
Variant variant_from_name(const std::string& name);

// 5-minute slice of the day, in [0, 288)
inline int time_slice_of(std::int64_t ts) {
  auto sec = ((ts % 86400) + 86400) % 86400;
  return static_cast<int>(sec / 300);
}

// Monday = 0 ... Sunday = 6
inline int day_of_week(std::int64_t ts) {
  auto days = ts / 86400 - (ts % 86400 < 0 ? 1 : 0);
  return static_cast<int>(((days + 3) % 7 + 7) % 7);
}

// --- feature scaling ----------------------------------------------------------

struct Scaler {
  double lo = 0.0;
  double hi = 1.0;
  double scale(double x) const { return (x - lo) / (hi - lo); }
};

struct FeatureScalers {
  Scaler link_length;
  Scaler link_speed;
  Scaler route_length;
  Scaler link_count;
  Scaler mean_speed;

  // Min-max statistics over the training split (observed speeds).
  static FeatureScalers fit(const std::vector<Trip>& train, const LinkCatalog& catalog);
};

// --- speed feature source -------------------------------------------------------

// v_ij for training is the trip's observed per-link speed; for inference the
// historical per-(link, bin) mean stands in.
class SpeedProvider {
 public:
  virtual ~SpeedProvider() = default;
  virtual double speed(const Trip& trip, std::size_t pos, int bin) const = 0;
};

class ObservedSpeeds final : public SpeedProvider {
 public:
  double speed(const Trip& trip, std::size_t pos, int) const override {
    return trip.link_speeds_mps[pos];
  }
};

class HistoricalSpeeds final : public SpeedProvider {
 public:
  explicit HistoricalSpeeds(const BinSpeedStats& stats) : stats_(&stats) {}
  double speed(const Trip& trip, std::size_t pos, int bin) const override {
    return stats_->means(bin - 1, trip.link_ids[pos] - 1);
  }

 private:
  const BinSpeedStats* stats_;
};

// --- features -------------------------------------------------------------------

struct TripFeatures {
  std::vector<std::int32_t> link_cols;  // 0-based columns into the link table
  Vector len_scaled;                    // per position
  Vector v_scaled;                      // per position
  int ts_index = 0;                     // [0, 288)
  int dow = 0;                          // [0, 7)
  std::int32_t driver_col = 0;          // 0-based
  Vector cont;                          // route length, link count, mean speed (scaled)

  Eigen::Index length() const { return len_scaled.size(); }
};

TripFeatures build_features(const Trip& trip, const LinkCatalog& catalog,
                            const FeatureScalers& scalers, const SpeedProvider& speeds,
                            const TimeBinSchedule& schedule);

// --- model ------------------------------------------------------------------------

inline constexpr Eigen::Index kTimeSlices = 288;
inline constexpr Eigen::Index kWeekDays = 7;

struct ModelConfig {
  Variant variant = Variant::wdr;
  std::int32_t m_links = 0;
  std::int32_t drivers = 0;
  Eigen::Index hidden = 128;
  Eigen::Index link_emb_dim = 20;
  Eigen::Index ts_emb_dim = 8;
  Eigen::Index dow_emb_dim = 3;
  Eigen::Index drv_emb_dim = 8;
  double output_bias = 0.0;  // pre-softplus init of the regressor head

  Eigen::Index seq_rows() const { return link_emb_dim + 2; }
  Eigen::Index wide_in() const {
    return 3 + ts_emb_dim * dow_emb_dim + ts_emb_dim * drv_emb_dim + dow_emb_dim * drv_emb_dim;
  }
  Eigen::Index deep_in() const { return ts_emb_dim + dow_emb_dim + drv_emb_dim + 3; }
};

struct WdrModel {
  ModelConfig config;
  Matrix link_emb;  // link_emb_dim x M
  Matrix ts_emb;    // ts_emb_dim x 288
  Matrix dow_emb;   // dow_emb_dim x 7
  Matrix drv_emb;   // drv_emb_dim x D
  nn::Affine wide;  // hidden x wide_in
  nn::Mlp deep;     // deep_in -> hidden x3 (ReLU) -> hidden
  nn::Lstm lstm;    // in seq_rows, hidden
  nn::Mlp reg;      // 3*hidden -> hidden -> hidden -> 1, then softplus

  static WdrModel make(const ModelConfig& config, std::uint64_t seed);
  std::vector<nn::ParamRef> params();
};

struct Gradients {
  Matrix link_emb, ts_emb, dow_emb, drv_emb;
  nn::AffineGrad wide;
  nn::MlpGrad deep, reg;
  nn::LstmGrad lstm;

  void resize_like(WdrModel& model);
  void set_zero();
  std::vector<nn::ParamRef> refs();  // same order as WdrModel::params()
};

struct ForwardCache {
  std::vector<Eigen::Index> lengths;                  // per trip, sorted order
  std::vector<std::vector<std::int32_t>> step_ids;    // link cols active at each step
  nn::LstmCache lstm;
  Matrix ts_e, dow_e, drv_e;                          // gathered embeddings
  std::vector<std::int32_t> ts_ids, dow_ids, drv_ids;
  Matrix wide_in;
  nn::MlpCache deep, reg;
  Matrix concat;                                      // 3h x B
  Eigen::RowVectorXd u;                               // pre-softplus
};

// Wide-module input: raw continuous features stacked over the pairwise
// cross products of the three categorical embeddings (a-major flattening).
Matrix wide_input(const ModelConfig& config, const Matrix& ts_e, const Matrix& dow_e,
                  const Matrix& drv_e, const Matrix& cont);
void wide_input_backward(const ModelConfig& config, const Matrix& d_in, const Matrix& ts_e,
                         const Matrix& dow_e, const Matrix& drv_e, Matrix& d_ts, Matrix& d_dow,
                         Matrix& d_drv);

// Trips must be sorted by descending length. Returns predictions in seconds.
Vector forward(const WdrModel& model, const std::vector<TripFeatures>& trips,
               ForwardCache* cache);

// d_pred is dL/dy' per trip (sorted order); accumulates into grad.
void backward(const WdrModel& model, const ForwardCache& cache, const Vector& d_pred,
              Gradients& grad);

// Single-trip convenience wrapper.
double predict(const WdrModel& model, const TripFeatures& trip);

// Batched prediction over many trips in input order; parallelized in chunks.
Vector batch_predict(const WdrModel& model, const std::vector<Trip>& trips,
                     const LinkCatalog& catalog, const FeatureScalers& scalers,
                     const SpeedProvider& speeds, const TimeBinSchedule& schedule,
                     int batch_size = 256);

// The spec'd sequential feature matrix (seq_rows x T) for one trip.
Matrix sequential_matrix(const WdrModel& model, const TripFeatures& trip);

// --- Route-ETA baseline --------------------------------------------------------

// Per-link historical mean speed plus per-link mean residual wait; unseen
// links fall back to the global means.
struct RouteEtaTables {
  Vector mean_speed;  // M
  Vector mean_wait;   // M
  Vector seen;        // M, traversal counts (stored as doubles for checkpointing)
  double global_speed = 0.0;
  double global_wait = 0.0;

  static RouteEtaTables fit(const std::vector<Trip>& train, const LinkCatalog& catalog);
  double predict(const Trip& trip, const LinkCatalog& catalog) const;
};

// --- checkpoint assembly ---------------------------------------------------------

struct Checkpoint {
  Variant variant = Variant::wdr;
  std::optional<WdrModel> model;
  std::optional<RouteEtaTables> route;
  FeatureScalers scalers;

  std::vector<NamedTensor> to_tensors() const;
  static Checkpoint from_tensors(const std::vector<NamedTensor>& tensors);
};

}  // namespace rnml::wdr

#endif  // RNML_WDR_HPP
