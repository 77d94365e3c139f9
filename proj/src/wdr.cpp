#include "rnml/wdr.hpp"

#include <algorithm>
#include <numeric>

namespace rnml::wdr {

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::route_eta: return "route-eta";
    case Variant::wdr: return "wdr";
    case Variant::wdr_nolink: return "wdr-nolink";
    case Variant::rnml: return "rnml";
  }
  throw std::invalid_argument("variant_name: bad variant");
}

Variant variant_from_name(const std::string& name) {
  if (name == "route-eta") return Variant::route_eta;
  if (name == "wdr") return Variant::wdr;
  if (name == "wdr-nolink") return Variant::wdr_nolink;
  if (name == "rnml") return Variant::rnml;
  throw std::invalid_argument("unknown model variant '" + name +
                              "' (expected route-eta|wdr|wdr-nolink|rnml)");
}

namespace {

struct MinMax {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  void add(double x) {
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  Scaler scaler() const {
    if (!(hi > lo)) return Scaler{lo, lo + 1.0};  // constant feature; maps to 0
    return Scaler{lo, hi};
  }
};

}  // namespace

FeatureScalers FeatureScalers::fit(const std::vector<Trip>& train, const LinkCatalog& catalog) {
  if (train.empty()) throw std::invalid_argument("FeatureScalers::fit: empty training split");
  MinMax len, speed, route, count, mean;
  for (const Trip& trip : train) {
    double total_len = 0.0;
    double speed_sum = 0.0;
    for (std::size_t j = 0; j < trip.link_ids.size(); ++j) {
      const LinkSpec& link = catalog.at(trip.link_ids[j]);
      len.add(link.length_m);
      speed.add(trip.link_speeds_mps[j]);
      total_len += link.length_m;
      speed_sum += trip.link_speeds_mps[j];
    }
    route.add(total_len);
    count.add(static_cast<double>(trip.link_ids.size()));
    mean.add(speed_sum / static_cast<double>(trip.link_ids.size()));
  }
  FeatureScalers s;
  s.link_length = len.scaler();
  s.link_speed = speed.scaler();
  s.route_length = route.scaler();
  s.link_count = count.scaler();
  s.mean_speed = mean.scaler();
  return s;
}

TripFeatures build_features(const Trip& trip, const LinkCatalog& catalog,
                            const FeatureScalers& scalers, const SpeedProvider& speeds,
                            const TimeBinSchedule& schedule) {
  const auto t = trip.link_ids.size();
  if (t == 0) throw std::invalid_argument("build_features: empty trip");
  const int bin = schedule.bin_of(trip.depart_ts);

  TripFeatures f;
  f.link_cols.resize(t);
  f.len_scaled.resize(static_cast<Eigen::Index>(t));
  f.v_scaled.resize(static_cast<Eigen::Index>(t));
  double total_len = 0.0;
  double speed_sum = 0.0;
  for (std::size_t j = 0; j < t; ++j) {
    const auto id = trip.link_ids[j];
    if (id < 1 || id > catalog.size()) {
      throw std::invalid_argument("build_features: unknown link " + std::to_string(id));
    }
    const LinkSpec& link = catalog.links[static_cast<std::size_t>(id - 1)];
    const double v = speeds.speed(trip, j, bin);
    f.link_cols[j] = id - 1;
    f.len_scaled(static_cast<Eigen::Index>(j)) = scalers.link_length.scale(link.length_m);
    f.v_scaled(static_cast<Eigen::Index>(j)) = scalers.link_speed.scale(v);
    total_len += link.length_m;
    speed_sum += v;
  }
  f.ts_index = time_slice_of(trip.depart_ts);
  f.dow = day_of_week(trip.depart_ts);
  f.driver_col = trip.driver_id - 1;
  f.cont.resize(3);
  f.cont << scalers.route_length.scale(total_len),
      scalers.link_count.scale(static_cast<double>(t)),
      scalers.mean_speed.scale(speed_sum / static_cast<double>(t));
  return f;
}

WdrModel WdrModel::make(const ModelConfig& config, std::uint64_t seed) {
  if (config.m_links < 1 || config.drivers < 1) {
    throw std::invalid_argument("WdrModel::make: need m_links and drivers >= 1");
  }
  Rng rng(hash_combine(seed, 0x57647249'6e6974ULL));
  WdrModel model;
  model.config = config;
  model.link_emb.resize(config.link_emb_dim, config.m_links);
  model.ts_emb.resize(config.ts_emb_dim, kTimeSlices);
  model.dow_emb.resize(config.dow_emb_dim, kWeekDays);
  model.drv_emb.resize(config.drv_emb_dim, config.drivers);
  nn::init_uniform(model.link_emb, rng);
  nn::init_uniform(model.ts_emb, rng);
  nn::init_uniform(model.dow_emb, rng);
  nn::init_uniform(model.drv_emb, rng);

  model.wide.w.resize(config.hidden, config.wide_in());
  nn::init_uniform(model.wide.w, rng);
  model.wide.b.setZero(config.hidden);

  model.deep = nn::Mlp::make(
      {config.deep_in(), config.hidden, config.hidden, config.hidden, config.hidden}, rng);
  model.lstm = nn::Lstm::make(config.seq_rows(), config.hidden, rng);
  model.reg = nn::Mlp::make({3 * config.hidden, config.hidden, config.hidden, 1}, rng);
  model.reg.layers.back().b(0) = config.output_bias;
  return model;
}

std::vector<nn::ParamRef> WdrModel::params() {
  std::vector<nn::ParamRef> refs;
  refs.push_back(nn::param_ref("link_emb", link_emb));
  refs.push_back(nn::param_ref("ts_emb", ts_emb));
  refs.push_back(nn::param_ref("dow_emb", dow_emb));
  refs.push_back(nn::param_ref("drv_emb", drv_emb));
  refs.push_back(nn::param_ref("wide/w", wide.w));
  refs.push_back(nn::param_ref("wide/b", wide.b));
  for (std::size_t i = 0; i < deep.layers.size(); ++i) {
    refs.push_back(nn::param_ref("deep/" + std::to_string(i) + "/w", deep.layers[i].w));
    refs.push_back(nn::param_ref("deep/" + std::to_string(i) + "/b", deep.layers[i].b));
  }
  refs.push_back(nn::param_ref("lstm/wx", lstm.wx));
  refs.push_back(nn::param_ref("lstm/wh", lstm.wh));
  refs.push_back(nn::param_ref("lstm/b", lstm.b));
  for (std::size_t i = 0; i < reg.layers.size(); ++i) {
    refs.push_back(nn::param_ref("reg/" + std::to_string(i) + "/w", reg.layers[i].w));
    refs.push_back(nn::param_ref("reg/" + std::to_string(i) + "/b", reg.layers[i].b));
  }
  return refs;
}

void Gradients::resize_like(WdrModel& model) {
  link_emb.setZero(model.link_emb.rows(), model.link_emb.cols());
  ts_emb.setZero(model.ts_emb.rows(), model.ts_emb.cols());
  dow_emb.setZero(model.dow_emb.rows(), model.dow_emb.cols());
  drv_emb.setZero(model.drv_emb.rows(), model.drv_emb.cols());
  wide.resize_like(model.wide);
  deep.resize_like(model.deep);
  reg.resize_like(model.reg);
  lstm.resize_like(model.lstm);
}

void Gradients::set_zero() {
  link_emb.setZero();
  ts_emb.setZero();
  dow_emb.setZero();
  drv_emb.setZero();
  wide.w.setZero();
  wide.b.setZero();
  for (auto& l : deep.layers) {
    l.w.setZero();
    l.b.setZero();
  }
  lstm.wx.setZero();
  lstm.wh.setZero();
  lstm.b.setZero();
  for (auto& l : reg.layers) {
    l.w.setZero();
    l.b.setZero();
  }
}

std::vector<nn::ParamRef> Gradients::refs() {
  std::vector<nn::ParamRef> refs;
  refs.push_back(nn::param_ref("link_emb", link_emb));
  refs.push_back(nn::param_ref("ts_emb", ts_emb));
  refs.push_back(nn::param_ref("dow_emb", dow_emb));
  refs.push_back(nn::param_ref("drv_emb", drv_emb));
  refs.push_back(nn::param_ref("wide/w", wide.w));
  refs.push_back(nn::param_ref("wide/b", wide.b));
  for (std::size_t i = 0; i < deep.layers.size(); ++i) {
    refs.push_back(nn::param_ref("deep/" + std::to_string(i) + "/w", deep.layers[i].w));
    refs.push_back(nn::param_ref("deep/" + std::to_string(i) + "/b", deep.layers[i].b));
  }
  refs.push_back(nn::param_ref("lstm/wx", lstm.wx));
  refs.push_back(nn::param_ref("lstm/wh", lstm.wh));
  refs.push_back(nn::param_ref("lstm/b", lstm.b));
  for (std::size_t i = 0; i < reg.layers.size(); ++i) {
    refs.push_back(nn::param_ref("reg/" + std::to_string(i) + "/w", reg.layers[i].w));
    refs.push_back(nn::param_ref("reg/" + std::to_string(i) + "/b", reg.layers[i].b));
  }
  return refs;
}

namespace {

// vec(outer(a, b)) with a-major flattening, appended per column.
void fill_cross_block(Matrix& dst, Eigen::Index row0, const Matrix& a, const Matrix& b) {
  const Eigen::Index da = a.rows();
  const Eigen::Index db = b.rows();
  for (Eigen::Index col = 0; col < a.cols(); ++col) {
    for (Eigen::Index i = 0; i < da; ++i) {
      for (Eigen::Index j = 0; j < db; ++j) {
        dst(row0 + i * db + j, col) = a(i, col) * b(j, col);
      }
    }
  }
}

void cross_block_backward(const Matrix& d_block, Eigen::Index row0, const Matrix& a,
                          const Matrix& b, Matrix& d_a, Matrix& d_b) {
  const Eigen::Index da = a.rows();
  const Eigen::Index db = b.rows();
  for (Eigen::Index col = 0; col < a.cols(); ++col) {
    for (Eigen::Index i = 0; i < da; ++i) {
      for (Eigen::Index j = 0; j < db; ++j) {
        const double g = d_block(row0 + i * db + j, col);
        d_a(i, col) += g * b(j, col);
        d_b(j, col) += g * a(i, col);
      }
    }
  }
}

}  // namespace

Matrix wide_input(const ModelConfig& config, const Matrix& ts_e, const Matrix& dow_e,
                  const Matrix& drv_e, const Matrix& cont) {
  Matrix in(config.wide_in(), ts_e.cols());
  in.topRows(3) = cont;
  Eigen::Index row = 3;
  fill_cross_block(in, row, ts_e, dow_e);
  row += config.ts_emb_dim * config.dow_emb_dim;
  fill_cross_block(in, row, ts_e, drv_e);
  row += config.ts_emb_dim * config.drv_emb_dim;
  fill_cross_block(in, row, dow_e, drv_e);
  return in;
}

void wide_input_backward(const ModelConfig& config, const Matrix& d_in, const Matrix& ts_e,
                         const Matrix& dow_e, const Matrix& drv_e, Matrix& d_ts, Matrix& d_dow,
                         Matrix& d_drv) {
  Eigen::Index row = 3;
  cross_block_backward(d_in, row, ts_e, dow_e, d_ts, d_dow);
  row += config.ts_emb_dim * config.dow_emb_dim;
  cross_block_backward(d_in, row, ts_e, drv_e, d_ts, d_drv);
  row += config.ts_emb_dim * config.drv_emb_dim;
  cross_block_backward(d_in, row, dow_e, drv_e, d_dow, d_drv);
}

Vector forward(const WdrModel& model, const std::vector<TripFeatures>& trips,
               ForwardCache* scratch) {
  if (trips.empty()) throw std::invalid_argument("wdr::forward: empty batch");
  const auto b = static_cast<Eigen::Index>(trips.size());
  const ModelConfig& cfg = model.config;
  const bool use_link_emb = cfg.variant != Variant::wdr_nolink;

  ForwardCache local;
  ForwardCache& cache = scratch ? *scratch : local;
  cache.lengths.resize(trips.size());
  for (std::size_t s = 0; s < trips.size(); ++s) {
    cache.lengths[s] = trips[s].length();
    if (s > 0 && cache.lengths[s] > cache.lengths[s - 1]) {
      throw std::invalid_argument("wdr::forward: trips must be sorted by descending length");
    }
  }
  const Eigen::Index t_max = cache.lengths.front();

  // sequential block, packed
  std::vector<Matrix> x_steps(static_cast<std::size_t>(t_max));
  cache.step_ids.assign(static_cast<std::size_t>(t_max), {});
  for (Eigen::Index t = 0; t < t_max; ++t) {
    Eigen::Index active = 0;
    while (active < b && cache.lengths[static_cast<std::size_t>(active)] > t) ++active;
    Matrix& x = x_steps[static_cast<std::size_t>(t)];
    x.resize(cfg.seq_rows(), active);
    auto& ids = cache.step_ids[static_cast<std::size_t>(t)];
    ids.resize(static_cast<std::size_t>(active));
    for (Eigen::Index s = 0; s < active; ++s) {
      const TripFeatures& f = trips[static_cast<std::size_t>(s)];
      const auto col = f.link_cols[static_cast<std::size_t>(t)];
      if (col < 0 || col >= model.link_emb.cols()) {
        throw std::invalid_argument("wdr::forward: link column out of range");
      }
      ids[static_cast<std::size_t>(s)] = col;
      if (use_link_emb) {
        x.col(s).head(cfg.link_emb_dim) = model.link_emb.col(col);
      } else {
        x.col(s).head(cfg.link_emb_dim).setZero();
      }
      x(cfg.link_emb_dim, s) = f.len_scaled(t);
      x(cfg.link_emb_dim + 1, s) = f.v_scaled(t);
    }
  }
  nn::lstm_forward_packed(model.lstm, x_steps, cache.lstm);

  Matrix h_t(cfg.hidden, b);
  for (Eigen::Index s = 0; s < b; ++s) {
    h_t.col(s) = cache.lstm.h[static_cast<std::size_t>(cache.lengths[static_cast<std::size_t>(s)] - 1)].col(s);
  }

  // non-sequential features and categorical embeddings
  cache.ts_ids.resize(trips.size());
  cache.dow_ids.resize(trips.size());
  cache.drv_ids.resize(trips.size());
  for (std::size_t s = 0; s < trips.size(); ++s) {
    cache.ts_ids[s] = trips[s].ts_index;
    cache.dow_ids[s] = trips[s].dow;
    cache.drv_ids[s] = trips[s].driver_col;
  }
  cache.ts_e = nn::embed_lookup(model.ts_emb, cache.ts_ids);
  cache.dow_e = nn::embed_lookup(model.dow_emb, cache.dow_ids);
  cache.drv_e = nn::embed_lookup(model.drv_emb, cache.drv_ids);

  Matrix cont(3, b);
  for (Eigen::Index s = 0; s < b; ++s) cont.col(s) = trips[static_cast<std::size_t>(s)].cont;
  cache.wide_in = wide_input(cfg, cache.ts_e, cache.dow_e, cache.drv_e, cont);
  const Matrix h_w = model.wide.forward(cache.wide_in);

  Matrix z(cfg.deep_in(), b);
  z.topRows(cfg.ts_emb_dim) = cache.ts_e;
  z.middleRows(cfg.ts_emb_dim, cfg.dow_emb_dim) = cache.dow_e;
  z.middleRows(cfg.ts_emb_dim + cfg.dow_emb_dim, cfg.drv_emb_dim) = cache.drv_e;
  for (Eigen::Index s = 0; s < b; ++s) {
    z.col(s).tail(3) = trips[static_cast<std::size_t>(s)].cont;
  }
  const Matrix h_d = nn::mlp_forward(model.deep, z, &cache.deep);

  cache.concat.resize(3 * cfg.hidden, b);
  cache.concat.topRows(cfg.hidden) = h_w;
  cache.concat.middleRows(cfg.hidden, cfg.hidden) = h_d;
  cache.concat.bottomRows(cfg.hidden) = h_t;

  cache.u = nn::mlp_forward(model.reg, cache.concat, &cache.reg).row(0);

  Vector y(b);
  for (Eigen::Index s = 0; s < b; ++s) {
    y(s) = nn::softplus(cache.u(s));
    if (!std::isfinite(y(s))) {
      throw std::runtime_error("wdr::forward: non-finite prediction at batch column " +
                               std::to_string(s));
    }
  }
  return y;
}

void backward(const WdrModel& model, const ForwardCache& cache, const Vector& d_pred,
              Gradients& grad) {
  const ModelConfig& cfg = model.config;
  const Eigen::Index b = d_pred.size();
  const bool use_link_emb = cfg.variant != Variant::wdr_nolink;

  Matrix d_u(1, b);
  for (Eigen::Index s = 0; s < b; ++s) d_u(0, s) = d_pred(s) * nn::sigmoid(cache.u(s));

  const Matrix d_concat = nn::mlp_backward(model.reg, cache.reg, d_u, grad.reg);
  const Matrix d_hw = d_concat.topRows(cfg.hidden);
  const Matrix d_hd = d_concat.middleRows(cfg.hidden, cfg.hidden);
  const Matrix d_ht = d_concat.bottomRows(cfg.hidden);

  // wide
  grad.wide.w.noalias() += d_hw * cache.wide_in.transpose();
  grad.wide.b += d_hw.rowwise().sum();
  const Matrix d_wide_in = model.wide.w.transpose() * d_hw;
  Matrix d_ts = Matrix::Zero(cfg.ts_emb_dim, b);
  Matrix d_dow = Matrix::Zero(cfg.dow_emb_dim, b);
  Matrix d_drv = Matrix::Zero(cfg.drv_emb_dim, b);
  wide_input_backward(cfg, d_wide_in, cache.ts_e, cache.dow_e, cache.drv_e, d_ts, d_dow, d_drv);

  // deep
  const Matrix d_z = nn::mlp_backward(model.deep, cache.deep, d_hd, grad.deep);
  d_ts += d_z.topRows(cfg.ts_emb_dim);
  d_dow += d_z.middleRows(cfg.ts_emb_dim, cfg.dow_emb_dim);
  d_drv += d_z.middleRows(cfg.ts_emb_dim + cfg.dow_emb_dim, cfg.drv_emb_dim);

  nn::embed_backward(cache.ts_ids, d_ts, grad.ts_emb);
  nn::embed_backward(cache.dow_ids, d_dow, grad.dow_emb);
  nn::embed_backward(cache.drv_ids, d_drv, grad.drv_emb);

  // recurrent
  const std::vector<Matrix> d_x =
      nn::lstm_backward_packed(model.lstm, cache.lstm, d_ht, cache.lengths, grad.lstm);
  if (use_link_emb) {
    for (std::size_t t = 0; t < d_x.size(); ++t) {
      nn::embed_backward(cache.step_ids[t], d_x[t].topRows(cfg.link_emb_dim), grad.link_emb);
    }
  }
}

double predict(const WdrModel& model, const TripFeatures& trip) {
  return forward(model, {trip}, nullptr)(0);
}

Vector batch_predict(const WdrModel& model, const std::vector<Trip>& trips,
                     const LinkCatalog& catalog, const FeatureScalers& scalers,
                     const SpeedProvider& speeds, const TimeBinSchedule& schedule,
                     int batch_size) {
  Vector out(static_cast<Eigen::Index>(trips.size()));
  const std::size_t chunks = (trips.size() + static_cast<std::size_t>(batch_size) - 1) /
                             static_cast<std::size_t>(batch_size);
  parallel_for(chunks, [&](std::size_t chunk) {
    const std::size_t begin = chunk * static_cast<std::size_t>(batch_size);
    const std::size_t end = std::min(trips.size(), begin + static_cast<std::size_t>(batch_size));
    std::vector<std::size_t> order(end - begin);
    std::iota(order.begin(), order.end(), begin);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t c) {
      return trips[a].link_ids.size() > trips[c].link_ids.size();
    });
    std::vector<TripFeatures> features;
    features.reserve(order.size());
    for (auto idx : order) {
      features.push_back(build_features(trips[idx], catalog, scalers, speeds, schedule));
    }
    const Vector y = forward(model, features, nullptr);
    for (std::size_t s = 0; s < order.size(); ++s) {
      out(static_cast<Eigen::Index>(order[s])) = y(static_cast<Eigen::Index>(s));
    }
  });
  return out;
}

Matrix sequential_matrix(const WdrModel& model, const TripFeatures& trip) {
  const ModelConfig& cfg = model.config;
  Matrix x(cfg.seq_rows(), trip.length());
  for (Eigen::Index t = 0; t < trip.length(); ++t) {
    if (cfg.variant == Variant::wdr_nolink) {
      x.col(t).head(cfg.link_emb_dim).setZero();
    } else {
      x.col(t).head(cfg.link_emb_dim) = model.link_emb.col(trip.link_cols[static_cast<std::size_t>(t)]);
    }
    x(cfg.link_emb_dim, t) = trip.len_scaled(t);
    x(cfg.link_emb_dim + 1, t) = trip.v_scaled(t);
  }
  return x;
}

RouteEtaTables RouteEtaTables::fit(const std::vector<Trip>& train, const LinkCatalog& catalog) {
  const auto m = catalog.size();
  std::vector<KahanSum> speed_sum(static_cast<std::size_t>(m));
  std::vector<KahanSum> wait_sum(static_cast<std::size_t>(m));
  std::vector<std::int64_t> count(static_cast<std::size_t>(m), 0);
  KahanSum g_speed, g_wait;
  std::int64_t g_count = 0;

  for (const Trip& trip : train) {
    // residual after dividing lengths by the observed speeds == total waits,
    // spread evenly over the trip's links
    double drive = 0.0;
    for (std::size_t j = 0; j < trip.link_ids.size(); ++j) {
      drive += catalog.at(trip.link_ids[j]).length_m / trip.link_speeds_mps[j];
    }
    const double wait_each = (trip.travel_time_s - drive) / static_cast<double>(trip.link_ids.size());
    for (std::size_t j = 0; j < trip.link_ids.size(); ++j) {
      const auto idx = static_cast<std::size_t>(trip.link_ids[j] - 1);
      speed_sum[idx].add(trip.link_speeds_mps[j]);
      wait_sum[idx].add(wait_each);
      ++count[idx];
      g_speed.add(trip.link_speeds_mps[j]);
      g_wait.add(wait_each);
      ++g_count;
    }
  }
  if (g_count == 0) throw std::invalid_argument("RouteEtaTables::fit: empty training split");

  RouteEtaTables tables;
  tables.mean_speed.setZero(m);
  tables.mean_wait.setZero(m);
  tables.seen.setZero(m);
  tables.global_speed = g_speed.value() / static_cast<double>(g_count);
  tables.global_wait = g_wait.value() / static_cast<double>(g_count);
  for (std::int32_t l = 0; l < m; ++l) {
    const auto idx = static_cast<std::size_t>(l);
    tables.seen(l) = static_cast<double>(count[idx]);
    if (count[idx] > 0) {
      tables.mean_speed(l) = speed_sum[idx].value() / static_cast<double>(count[idx]);
      tables.mean_wait(l) = wait_sum[idx].value() / static_cast<double>(count[idx]);
    }
  }
  return tables;
}

double RouteEtaTables::predict(const Trip& trip, const LinkCatalog& catalog) const {
  double y = 0.0;
  for (auto id : trip.link_ids) {
    const LinkSpec& link = catalog.at(id);
    const bool unseen = seen(id - 1) <= 0.0;
    const double v = unseen ? global_speed : mean_speed(id - 1);
    const double w = unseen ? global_wait : mean_wait(id - 1);
    y += link.length_m / v + w;
  }
  return y;
}

namespace {

Matrix scalar_tensor(double v) {
  Matrix m(1, 1);
  m(0, 0) = v;
  return m;
}

Matrix scaler_tensor(const Scaler& s) {
  Matrix m(2, 1);
  m(0, 0) = s.lo;
  m(1, 0) = s.hi;
  return m;
}

Scaler scaler_from(const Matrix& m) { return Scaler{m(0, 0), m(1, 0)}; }

}  // namespace

std::vector<NamedTensor> Checkpoint::to_tensors() const {
  std::vector<NamedTensor> tensors;
  tensors.push_back({"meta/version", scalar_tensor(1.0)});
  tensors.push_back({"meta/variant", scalar_tensor(static_cast<double>(variant))});
  tensors.push_back({"scaler/link_length", scaler_tensor(scalers.link_length)});
  tensors.push_back({"scaler/link_speed", scaler_tensor(scalers.link_speed)});
  tensors.push_back({"scaler/route_length", scaler_tensor(scalers.route_length)});
  tensors.push_back({"scaler/link_count", scaler_tensor(scalers.link_count)});
  tensors.push_back({"scaler/mean_speed", scaler_tensor(scalers.mean_speed)});
  if (variant == Variant::route_eta) {
    if (!route) throw std::invalid_argument("Checkpoint: route-eta tables missing");
    tensors.push_back({"route/mean_speed", route->mean_speed});
    tensors.push_back({"route/mean_wait", route->mean_wait});
    tensors.push_back({"route/seen", route->seen});
    tensors.push_back({"route/global", [&] {
                         Matrix m(2, 1);
                         m(0, 0) = route->global_speed;
                         m(1, 0) = route->global_wait;
                         return m;
                       }()});
  } else {
    if (!model) throw std::invalid_argument("Checkpoint: model missing");
    const ModelConfig& cfg = model->config;
    Matrix meta(8, 1);
    meta << static_cast<double>(cfg.m_links), static_cast<double>(cfg.drivers),
        static_cast<double>(cfg.hidden), static_cast<double>(cfg.link_emb_dim),
        static_cast<double>(cfg.ts_emb_dim), static_cast<double>(cfg.dow_emb_dim),
        static_cast<double>(cfg.drv_emb_dim), cfg.output_bias;
    tensors.push_back({"meta/model_config", meta});
    auto refs = const_cast<WdrModel&>(*model).params();
    for (const auto& r : refs) {
      tensors.push_back({"param/" + r.name, r.map()});
    }
  }
  return tensors;
}

Checkpoint Checkpoint::from_tensors(const std::vector<NamedTensor>& tensors) {
  Checkpoint ckpt;
  ckpt.variant = static_cast<Variant>(static_cast<int>(find_tensor(tensors, "meta/variant")(0, 0)));
  ckpt.scalers.link_length = scaler_from(find_tensor(tensors, "scaler/link_length"));
  ckpt.scalers.link_speed = scaler_from(find_tensor(tensors, "scaler/link_speed"));
  ckpt.scalers.route_length = scaler_from(find_tensor(tensors, "scaler/route_length"));
  ckpt.scalers.link_count = scaler_from(find_tensor(tensors, "scaler/link_count"));
  ckpt.scalers.mean_speed = scaler_from(find_tensor(tensors, "scaler/mean_speed"));

  if (ckpt.variant == Variant::route_eta) {
    RouteEtaTables tables;
    tables.mean_speed = find_tensor(tensors, "route/mean_speed");
    tables.mean_wait = find_tensor(tensors, "route/mean_wait");
    tables.seen = find_tensor(tensors, "route/seen");
    const Matrix& g = find_tensor(tensors, "route/global");
    tables.global_speed = g(0, 0);
    tables.global_wait = g(1, 0);
    ckpt.route = std::move(tables);
    return ckpt;
  }

  const Matrix& meta = find_tensor(tensors, "meta/model_config");
  ModelConfig cfg;
  cfg.variant = ckpt.variant;
  cfg.m_links = static_cast<std::int32_t>(meta(0, 0));
  cfg.drivers = static_cast<std::int32_t>(meta(1, 0));
  cfg.hidden = static_cast<Eigen::Index>(meta(2, 0));
  cfg.link_emb_dim = static_cast<Eigen::Index>(meta(3, 0));
  cfg.ts_emb_dim = static_cast<Eigen::Index>(meta(4, 0));
  cfg.dow_emb_dim = static_cast<Eigen::Index>(meta(5, 0));
  cfg.drv_emb_dim = static_cast<Eigen::Index>(meta(6, 0));
  cfg.output_bias = meta(7, 0);

  WdrModel model = WdrModel::make(cfg, 0);
  for (auto& r : model.params()) {
    const Matrix& stored = find_tensor(tensors, "param/" + r.name);
    if (stored.rows() != r.rows || stored.cols() != r.cols) {
      throw data_error("checkpoint: tensor 'param/" + r.name + "' has unexpected shape");
    }
    r.map() = stored;
  }
  ckpt.model = std::move(model);
  return ckpt;
}

}  // namespace rnml::wdr
