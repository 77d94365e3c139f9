#include "doctest.h"

#include "rnml/trainer.hpp"
#include "rnml/wdr.hpp"
#include "test_util.hpp"

#include <numeric>

using namespace rnml;
using namespace rnml::wdr;

namespace {

const TimeBinSchedule kSchedule = TimeBinSchedule::default_k3();

struct Fixture {
  LinkCatalog catalog;
  std::vector<Trip> trips;
  FeatureScalers scalers;
  ObservedSpeeds observed;

  explicit Fixture(std::int32_t m = 20, std::int64_t n = 200, std::uint64_t seed = 3) {
    catalog = generate_network(m, seed);
    TripGenConfig config;
    config.n_trips = n;
    config.drivers = 6;
    config.seed = seed + 1;
    config.mean_links = 6.0;
    trips = generate_trips(catalog, config);
    scalers = FeatureScalers::fit(trips, catalog);
  }

  ModelConfig model_config(Variant variant = Variant::wdr, Eigen::Index hidden = 16) const {
    ModelConfig cfg;
    cfg.variant = variant;
    cfg.m_links = catalog.size();
    cfg.drivers = 6;
    cfg.hidden = hidden;
    return cfg;
  }

  std::vector<TripFeatures> features(std::size_t count, Variant,
                                     const WdrModel* = nullptr) const {
    std::vector<std::size_t> order(count);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return trips[a].link_ids.size() > trips[b].link_ids.size();
    });
    std::vector<TripFeatures> out;
    for (auto idx : order) {
      out.push_back(build_features(trips[idx], catalog, scalers, observed, kSchedule));
    }
    return out;
  }
};

void zero_params(WdrModel& model) {
  for (auto& ref : model.params()) ref.flat().setZero();
}

}  // namespace

TEST_CASE("build_features: sequence matrix is 22 x T with the embedding on top") {
  Fixture fx;
  Trip trip = test::make_trip(1, test::at_time(7, 23), {1, 2, 3}, {5.0, 6.0, 7.0}, 120.0, 2);
  const auto f = build_features(trip, fx.catalog, fx.scalers, fx.observed, kSchedule);

  WdrModel model = WdrModel::make(fx.model_config(Variant::wdr, 8), 1);
  const Matrix x = sequential_matrix(model, f);
  CHECK(x.rows() == 22);
  CHECK(x.cols() == 3);
  for (int t = 0; t < 3; ++t) {
    CHECK(x.col(t).head(20) == model.link_emb.col(t));
  }

  CHECK(f.ts_index == 88);  // floor((7*60+23)/5)
  CHECK(f.dow == 0);        // the synthetic epoch starts on a Monday
  CHECK(f.driver_col == 1);

  Trip sunday = trip;
  sunday.depart_ts = test::at_time(12, 0, 6);
  CHECK(build_features(sunday, fx.catalog, fx.scalers, fx.observed, kSchedule).dow == 6);

  Trip unknown = trip;
  unknown.link_ids = {99};
  unknown.link_speeds_mps = {5.0};
  CHECK_THROWS_AS(build_features(unknown, fx.catalog, fx.scalers, fx.observed, kSchedule),
                  std::invalid_argument);
}

TEST_CASE("ablation variant zeroes the embedding rows") {
  Fixture fx;
  Trip trip = test::make_trip(1, test::at_time(9, 0), {4, 4, 7}, {5.0, 6.0, 7.0});
  const auto f = build_features(trip, fx.catalog, fx.scalers, fx.observed, kSchedule);
  WdrModel model = WdrModel::make(fx.model_config(Variant::wdr_nolink, 8), 1);
  const Matrix x = sequential_matrix(model, f);
  CHECK(x.topRows(20).isZero(0.0));
  CHECK(x.row(20).cwiseAbs().minCoeff() >= 0.0);
}

TEST_CASE("wide input: zero continuous features and embeddings give the bias") {
  Fixture fx;
  WdrModel model = WdrModel::make(fx.model_config(Variant::wdr, 8), 5);
  const ModelConfig& cfg = model.config;
  const Matrix zero_ts = Matrix::Zero(cfg.ts_emb_dim, 1);
  const Matrix zero_dow = Matrix::Zero(cfg.dow_emb_dim, 1);
  const Matrix zero_drv = Matrix::Zero(cfg.drv_emb_dim, 1);
  const Matrix zero_cont = Matrix::Zero(3, 1);
  const Matrix in = wide_input(cfg, zero_ts, zero_dow, zero_drv, zero_cont);
  CHECK(in.isZero(0.0));
  const Matrix h_w = model.wide.forward(in);
  CHECK((h_w.col(0) - model.wide.b).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("wide input is linear in each categorical embedding (distinct pairs only)") {
  Fixture fx;
  ModelConfig cfg = fx.model_config();
  Rng rng(9);
  Matrix ts(cfg.ts_emb_dim, 1), dow(cfg.dow_emb_dim, 1), drv(cfg.drv_emb_dim, 1), cont(3, 1);
  nn::init_uniform(ts, rng, 1.0);
  nn::init_uniform(dow, rng, 1.0);
  nn::init_uniform(drv, rng, 1.0);
  nn::init_uniform(cont, rng, 1.0);

  const Matrix f0 = wide_input(cfg, 0.0 * ts, dow, drv, cont);
  const Matrix f1 = wide_input(cfg, ts, dow, drv, cont);
  const Matrix f2 = wide_input(cfg, 2.0 * ts, dow, drv, cont);
  // doubling ts doubles every ts-involving cross term: f2 - f1 == f1 - f0
  CHECK(((f2 - f1) - (f1 - f0)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("wide path gradients match finite differences") {
  Fixture fx;
  WdrModel model = WdrModel::make(fx.model_config(Variant::wdr, 8), 6);
  const ModelConfig& cfg = model.config;
  Rng rng(10);
  Matrix cont(3, 2);
  nn::init_uniform(cont, rng, 0.3);
  const std::vector<std::int32_t> ts_ids{4, 7}, dow_ids{1, 2}, drv_ids{0, 3};
  // keep the probe loss small so central differences stay above fp noise
  Matrix weights(cfg.hidden, 2);
  nn::init_uniform(weights, rng, 0.3);

  auto loss = [&] {
    const Matrix ts_e = nn::embed_lookup(model.ts_emb, ts_ids);
    const Matrix dow_e = nn::embed_lookup(model.dow_emb, dow_ids);
    const Matrix drv_e = nn::embed_lookup(model.drv_emb, drv_ids);
    return model.wide.forward(wide_input(cfg, ts_e, dow_e, drv_e, cont))
        .cwiseProduct(weights)
        .sum();
  };

  const Matrix ts_e = nn::embed_lookup(model.ts_emb, ts_ids);
  const Matrix dow_e = nn::embed_lookup(model.dow_emb, dow_ids);
  const Matrix drv_e = nn::embed_lookup(model.drv_emb, drv_ids);
  const Matrix in = wide_input(cfg, ts_e, dow_e, drv_e, cont);

  nn::AffineGrad wide_grad;
  wide_grad.resize_like(model.wide);
  wide_grad.w = weights * in.transpose();
  wide_grad.b = weights.rowwise().sum();

  const Matrix d_in = model.wide.w.transpose() * weights;
  Matrix d_ts = Matrix::Zero(cfg.ts_emb_dim, 2);
  Matrix d_dow = Matrix::Zero(cfg.dow_emb_dim, 2);
  Matrix d_drv = Matrix::Zero(cfg.drv_emb_dim, 2);
  wide_input_backward(cfg, d_in, ts_e, dow_e, drv_e, d_ts, d_dow, d_drv);
  Matrix g_ts = Matrix::Zero(cfg.ts_emb_dim, kTimeSlices);
  Matrix g_dow = Matrix::Zero(cfg.dow_emb_dim, kWeekDays);
  Matrix g_drv = Matrix::Zero(cfg.drv_emb_dim, model.drv_emb.cols());
  nn::embed_backward(ts_ids, d_ts, g_ts);
  nn::embed_backward(dow_ids, d_dow, g_dow);
  nn::embed_backward(drv_ids, d_drv, g_drv);

  const auto report = nn::grad_check(
      loss,
      {nn::param_ref("wide/w", model.wide.w), nn::param_ref("wide/b", model.wide.b),
       nn::param_ref("ts_emb", model.ts_emb), nn::param_ref("dow_emb", model.dow_emb),
       nn::param_ref("drv_emb", model.drv_emb)},
      {nn::param_ref("dw", wide_grad.w), nn::param_ref("db", wide_grad.b),
       nn::param_ref("dts", g_ts), nn::param_ref("ddow", g_dow), nn::param_ref("ddrv", g_drv)},
      {1e-5, 200, 17});
  CHECK(report.max_rel_error < 1e-6);
}

TEST_CASE("deep module: shape contract and zero-weight behavior") {
  Fixture fx;
  WdrModel model = WdrModel::make(fx.model_config(Variant::wdr, 128), 2);
  CHECK(model.deep.out_dim() == 128);
  CHECK(model.deep.in_dim() == 22);
  CHECK(model.deep.layers.size() == 4);  // 3 hidden ReLU layers + linear output

  Matrix z(22, 1);
  z.setOnes();
  CHECK(nn::mlp_forward(model.deep, z).rows() == 128);

  for (auto& layer : model.deep.layers) {
    layer.w.setZero();
    layer.b.setZero();
  }
  CHECK(nn::mlp_forward(model.deep, z).isZero(0.0));
}

TEST_CASE("predict with all-zero parameters is softplus(0) = ln 2") {
  Fixture fx;
  WdrModel model = WdrModel::make(fx.model_config(Variant::wdr, 16), 7);
  zero_params(model);
  const auto features = fx.features(3, Variant::wdr);
  for (const auto& f : features) {
    CHECK(predict(model, f) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  }
}

TEST_CASE("regressor consumes the 3h concatenation and predictions stay positive") {
  Fixture fx;
  WdrModel model = WdrModel::make(fx.model_config(Variant::wdr, 128), 8);
  CHECK(model.reg.in_dim() == 384);
  CHECK(model.reg.layers.size() == 3);  // 2 hidden layers + scalar output
  CHECK(model.reg.out_dim() == 1);

  WdrModel small = WdrModel::make(fx.model_config(Variant::wdr, 16), 8);
  const auto features = fx.features(32, Variant::wdr);
  const Vector y = forward(small, features, nullptr);
  CHECK((y.array() > 0.0).all());
}

TEST_CASE("permuting trips in a batch permutes predictions") {
  Fixture fx;
  WdrModel model = WdrModel::make(fx.model_config(Variant::wdr, 16), 9);
  auto features = fx.features(8, Variant::wdr);
  const Vector y = forward(model, features, nullptr);

  // swap two equal-length trips to keep the descending-length precondition
  std::size_t a = 0, b = 0;
  for (std::size_t i = 0; i + 1 < features.size() && a == b; ++i) {
    if (features[i].length() == features[i + 1].length()) {
      a = i;
      b = i + 1;
    }
  }
  if (a != b) {
    std::swap(features[a], features[b]);
    const Vector y2 = forward(model, features, nullptr);
    CHECK(y2(static_cast<Eigen::Index>(a)) == y(static_cast<Eigen::Index>(b)));
    CHECK(y2(static_cast<Eigen::Index>(b)) == y(static_cast<Eigen::Index>(a)));
  }
}

TEST_CASE("batched predictions equal per-trip predictions within 1e-9") {
  Fixture fx(25, 300, 5);
  WdrModel model = WdrModel::make(fx.model_config(Variant::wdr, 32), 10);
  const auto features = fx.features(64, Variant::wdr);
  const Vector batched = forward(model, features, nullptr);
  for (std::size_t s = 0; s < features.size(); ++s) {
    CHECK(std::abs(batched(static_cast<Eigen::Index>(s)) - predict(model, features[s])) < 1e-9);
  }
}

TEST_CASE("wdr-nolink predictions ignore the link embedding table") {
  Fixture fx;
  WdrModel model = WdrModel::make(fx.model_config(Variant::wdr_nolink, 16), 11);
  const auto features = fx.features(10, Variant::wdr_nolink);
  const Vector before = forward(model, features, nullptr);

  // any permutation of the embedding table must not matter
  Matrix shuffled = model.link_emb;
  shuffled.col(0).swap(shuffled.col(5));
  shuffled.col(1).swap(shuffled.col(7));
  model.link_emb = shuffled;
  const Vector after = forward(model, features, nullptr);
  CHECK((before - after).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("full model gradients match finite differences on a 2-trip batch") {
  Fixture fx;
  WdrModel model = WdrModel::make(fx.model_config(Variant::wdr, 8), 12);
  const auto all_features = fx.features(2, Variant::wdr);
  // small targets keep 1/y large, lifting every gradient above the noise
  // floor of the central differences
  Vector target(2);
  target << 2.5, 1.5;

  auto loss = [&] {
    const Vector y = forward(model, all_features, nullptr);
    return trainer::mape_loss(y, target);
  };

  ForwardCache cache;
  const Vector y = forward(model, all_features, &cache);
  Gradients grads;
  grads.resize_like(model);
  wdr::backward(model, cache, trainer::mape_loss_backward(y, target), grads);

  const auto report =
      nn::grad_check(loss, model.params(), grads.refs(), {1e-5, 120, 23});
  CHECK(report.max_rel_error < 1e-4);
}

TEST_CASE("route-eta: hand-computed sums and the fallback rule") {
  LinkCatalog catalog;
  for (int i = 1; i <= 3; ++i) {
    LinkSpec link;
    link.link_id = i;
    link.length_m = i == 1 ? 500.0 : i == 2 ? 300.0 : 400.0;
    link.base_speed_mps = 10.0;
    link.popularity = 1.0;
    catalog.links.push_back(link);
  }

  RouteEtaTables tables;
  tables.mean_speed.resize(3);
  tables.mean_speed << 10.0, 15.0, 0.0;
  tables.mean_wait.resize(3);
  tables.mean_wait << 0.0, 12.0, 0.0;
  tables.seen.resize(3);
  tables.seen << 5.0, 5.0, 0.0;
  tables.global_speed = 8.0;
  tables.global_wait = 5.0;

  // one 500 m link at 10 m/s, no wait
  CHECK(tables.predict(test::make_trip(1, 0, {1}, {1.0}), catalog) ==
        doctest::Approx(50.0).epsilon(1e-12));
  // (500 m, 10 m/s) + (300 m, 15 m/s) + 12 s of waits
  CHECK(tables.predict(test::make_trip(2, 0, {1, 2}, {1.0, 1.0}), catalog) ==
        doctest::Approx(82.0).epsilon(1e-12));
  // unseen link: global means (8 m/s, 5 s) over 400 m
  CHECK(tables.predict(test::make_trip(3, 0, {3}, {1.0}), catalog) ==
        doctest::Approx(55.0).epsilon(1e-12));
}

TEST_CASE("route-eta fit reproduces per-link means on constructed data") {
  LinkCatalog catalog;
  for (int i = 1; i <= 2; ++i) {
    LinkSpec link;
    link.link_id = i;
    link.length_m = 100.0;
    link.base_speed_mps = 10.0;
    link.popularity = 1.0;
    catalog.links.push_back(link);
  }
  // trip: links 1,2 at speeds 10,20; travel = 100/10 + 100/20 + 6s wait
  std::vector<Trip> train{test::make_trip(1, 0, {1, 2}, {10.0, 20.0}, 21.0)};
  const auto tables = RouteEtaTables::fit(train, catalog);
  CHECK(tables.mean_speed(0) == doctest::Approx(10.0));
  CHECK(tables.mean_speed(1) == doctest::Approx(20.0));
  CHECK(tables.mean_wait(0) == doctest::Approx(3.0));  // 6 s spread over 2 links
  CHECK(tables.mean_wait(1) == doctest::Approx(3.0));
  CHECK(tables.global_speed == doctest::Approx(15.0));
}

TEST_CASE("wdr checkpoint round-trips model, scalers and predictions") {
  Fixture fx;
  WdrModel model = WdrModel::make(fx.model_config(Variant::wdr, 16), 13);
  Checkpoint ckpt;
  ckpt.variant = Variant::wdr;
  ckpt.model = model;
  ckpt.scalers = fx.scalers;

  const auto dir = test::tmp_dir("wdr_ckpt");
  save_checkpoint((dir / "m.bin").string(), ckpt.to_tensors());
  const auto loaded = Checkpoint::from_tensors(load_checkpoint((dir / "m.bin").string()));

  REQUIRE(loaded.variant == Variant::wdr);
  REQUIRE(loaded.model.has_value());
  const auto features = fx.features(5, Variant::wdr);
  const Vector a = forward(model, features, nullptr);
  const Vector b = forward(*loaded.model, features, nullptr);
  CHECK(a == b);
  CHECK(loaded.scalers.link_speed.lo == fx.scalers.link_speed.lo);
  CHECK(loaded.scalers.link_speed.hi == fx.scalers.link_speed.hi);
}

TEST_CASE("batch_predict is worker-count independent") {
  Fixture fx(25, 300, 6);
  WdrModel model = WdrModel::make(fx.model_config(Variant::wdr, 16), 14);
  setenv("RNML_THREADS", "1", 1);
  const Vector one = batch_predict(model, fx.trips, fx.catalog, fx.scalers, fx.observed,
                                   kSchedule, 64);
  setenv("RNML_THREADS", "2", 1);
  const Vector two = batch_predict(model, fx.trips, fx.catalog, fx.scalers, fx.observed,
                                   kSchedule, 64);
  unsetenv("RNML_THREADS");
  CHECK(one == two);
}

TEST_CASE("historical speed provider serves per-(link, bin) means") {
  Fixture fx(15, 400, 21);
  const auto stats = bin_average_speeds(fx.trips, kSchedule, fx.catalog.size());
  HistoricalSpeeds speeds(stats);
  Trip probe = test::make_trip(1, test::at_time(7, 0), {3, 9}, {99.0, 99.0});
  CHECK(speeds.speed(probe, 0, 1) == stats.means(0, 2));
  CHECK(speeds.speed(probe, 1, 3) == stats.means(2, 8));
}
