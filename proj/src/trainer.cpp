#include "rnml/trainer.hpp"

#include "rnml/evaluator.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

namespace rnml::trainer {

double mape_loss(const Vector& pred, const Vector& target) {
  if (pred.size() != target.size() || pred.size() == 0) {
    throw std::invalid_argument("mape_loss: size mismatch or empty");
  }
  if ((target.array() <= 0.0).any()) {
    throw std::invalid_argument("mape_loss: targets must be positive");
  }
  return ((target - pred).cwiseAbs().cwiseQuotient(target)).mean();
}

Vector mape_loss_backward(const Vector& pred, const Vector& target) {
  const double inv_n = 1.0 / static_cast<double>(pred.size());
  Vector d(pred.size());
  for (Eigen::Index i = 0; i < pred.size(); ++i) {
    const double diff = target(i) - pred(i);
    d(i) = diff > 0.0 ? -inv_n / target(i) : diff < 0.0 ? inv_n / target(i) : 0.0;
  }
  return d;
}

std::vector<std::vector<std::size_t>> make_batches(const std::vector<Eigen::Index>& lengths,
                                                   int batch_size, std::uint64_t seed,
                                                   std::int64_t epoch) {
  if (batch_size < 1) throw std::invalid_argument("make_batches: batch_size must be >= 1");
  const std::size_t n = lengths.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(hash_combine(hash_combine(seed, 0x73687566ULL), static_cast<std::uint64_t>(epoch)));
  rng.shuffle(order);

  const std::size_t pool = static_cast<std::size_t>(batch_size) * 8;
  for (std::size_t begin = 0; begin < n; begin += pool) {
    const std::size_t end = std::min(n, begin + pool);
    std::stable_sort(order.begin() + static_cast<std::ptrdiff_t>(begin),
                     order.begin() + static_cast<std::ptrdiff_t>(end),
                     [&](std::size_t a, std::size_t b) { return lengths[a] > lengths[b]; });
  }

  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t begin = 0; begin < n; begin += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(n, begin + static_cast<std::size_t>(batch_size));
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(begin),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  rng.shuffle(batches);
  return batches;
}

Batch assemble_batch(const std::vector<Trip>& trips, const std::vector<std::size_t>& indices,
                     const LinkCatalog& catalog, const wdr::FeatureScalers& scalers,
                     const wdr::SpeedProvider& speeds, const TimeBinSchedule& schedule) {
  Batch batch;
  batch.features.reserve(indices.size());
  batch.targets.resize(static_cast<Eigen::Index>(indices.size()));
  std::vector<std::size_t> order(indices);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return trips[a].link_ids.size() > trips[b].link_ids.size();
  });
  for (std::size_t s = 0; s < order.size(); ++s) {
    const Trip& trip = trips[order[s]];
    batch.features.push_back(wdr::build_features(trip, catalog, scalers, speeds, schedule));
    batch.targets(static_cast<Eigen::Index>(s)) = trip.travel_time_s;
    for (auto id : trip.link_ids) batch.distinct_links.push_back(id);
  }
  std::sort(batch.distinct_links.begin(), batch.distinct_links.end());
  batch.distinct_links.erase(std::unique(batch.distinct_links.begin(), batch.distinct_links.end()),
                             batch.distinct_links.end());
  return batch;
}

std::string log_row_csv(const LogRow& r) {
  return std::to_string(r.step) + ',' + r.split + ',' + format_double(r.mape) + ',' +
         format_double(r.mae) + ',' + format_double(r.rmse) + ',' + format_double(r.l_main) + ',' +
         format_double(r.l_aux);
}

void write_log_csv(const std::vector<LogRow>& rows, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error("cannot open " + path + " for writing");
  out << "step,split,mape,mae,rmse,l_main,l_aux\n";
  for (const LogRow& r : rows) out << log_row_csv(r) << '\n';
}

namespace {

double global_grad_norm(const std::vector<nn::ParamRef>& grads) {
  double sq = 0.0;
  for (const auto& g : grads) sq += g.flat().square().sum();
  return std::sqrt(sq);
}

}  // namespace

TrainResult train(const TrainConfig& config, const DatasetSplit& data, const LinkCatalog& catalog,
                  const DifferenceMatrix* q) {
  if (config.batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
  if (config.beta < 0.0 || config.beta > 1.0) throw std::invalid_argument("train: beta outside [0, 1]");
  if (data.train.empty()) throw std::invalid_argument("train: empty training split");
  if (config.variant == wdr::Variant::rnml && q == nullptr) {
    throw missing_prerequisite_error(
        "rnml training needs the link difference matrix; run the similarity step first");
  }

  const TimeBinSchedule schedule = TimeBinSchedule::default_k3();
  const wdr::FeatureScalers scalers = wdr::FeatureScalers::fit(data.train, catalog);
  const BinSpeedStats bin_stats = bin_average_speeds(data.train, schedule, catalog.size());
  const wdr::HistoricalSpeeds historical(bin_stats);
  const wdr::ObservedSpeeds observed;

  TrainResult result;
  result.best.variant = config.variant;
  result.best.scalers = scalers;
  auto push_row = [&](const LogRow& row) {
    result.log.push_back(row);
    if (config.on_log) config.on_log(row);
  };

  // Route-ETA has no gradient loop: fit the historical tables and report.
  if (config.variant == wdr::Variant::route_eta) {
    wdr::RouteEtaTables tables = wdr::RouteEtaTables::fit(data.train, catalog);
    if (!data.valid.empty()) {
      Vector pred(static_cast<Eigen::Index>(data.valid.size()));
      Vector target(static_cast<Eigen::Index>(data.valid.size()));
      for (std::size_t i = 0; i < data.valid.size(); ++i) {
        pred(static_cast<Eigen::Index>(i)) = tables.predict(data.valid[i], catalog);
        target(static_cast<Eigen::Index>(i)) = data.valid[i].travel_time_s;
      }
      const auto m = eval::metrics(target, pred);
      result.best_valid_mape = m.mape;
      push_row({0, "valid", m.mape, m.mae, m.rmse, m.mape, 0.0});
    }
    result.best.route = std::move(tables);
    return result;
  }

  // driver vocabulary from the data (ids are 1-based and dense by generation)
  std::int32_t drivers = 1;
  for (const Trip& t : data.train) drivers = std::max(drivers, t.driver_id);
  for (const Trip& t : data.valid) drivers = std::max(drivers, t.driver_id);
  for (const Trip& t : data.test) drivers = std::max(drivers, t.driver_id);

  // MAPE-optimal constant prediction: the 1/y-weighted median of the targets
  std::vector<double> times;
  times.reserve(data.train.size());
  for (const Trip& t : data.train) times.push_back(t.travel_time_s);
  std::sort(times.begin(), times.end());
  double inv_total = 0.0;
  for (double y : times) inv_total += 1.0 / y;
  double running = 0.0;
  double head_start = times.back();
  for (double y : times) {
    running += 1.0 / y;
    if (running >= 0.5 * inv_total) {
      head_start = y;
      break;
    }
  }

  wdr::ModelConfig model_config;
  model_config.variant = config.variant;
  model_config.m_links = catalog.size();
  model_config.drivers = drivers;
  model_config.hidden = config.hidden;
  model_config.link_emb_dim = config.link_emb_dim;
  // start the softplus head at that constant so the step budget goes into
  // structure, not into climbing the output scale
  model_config.output_bias = head_start > 30.0 ? head_start : std::log(std::expm1(head_start));

  wdr::WdrModel model = wdr::WdrModel::make(model_config, config.seed);
  wdr::Gradients grads;
  grads.resize_like(model);
  const std::vector<nn::ParamRef> param_refs = model.params();
  const std::vector<nn::ParamRef> grad_refs = grads.refs();
  nn::Adam adam(param_refs, nn::AdamConfig{config.lr, 0.9, 0.999, 1e-8});

  const bool use_aux = config.variant == wdr::Variant::rnml && config.beta > 0.0;
  const double main_weight = config.variant == wdr::Variant::rnml ? 1.0 - config.beta : 1.0;
  Rng aux_rng(hash_combine(config.seed, 0x617578ULL));

  auto run_validation = [&](std::int64_t step) {
    if (data.valid.empty()) return std::numeric_limits<double>::quiet_NaN();
    const Vector pred = wdr::batch_predict(model, data.valid, catalog, scalers, historical,
                                           schedule, config.batch_size);
    Vector target(static_cast<Eigen::Index>(data.valid.size()));
    for (std::size_t i = 0; i < data.valid.size(); ++i) {
      target(static_cast<Eigen::Index>(i)) = data.valid[i].travel_time_s;
    }
    const auto m = eval::metrics(target, pred);
    push_row({step, "valid", m.mape, m.mae, m.rmse, m.mape, 0.0});
    return m.mape;
  };

  std::vector<Eigen::Index> lengths(data.train.size());
  for (std::size_t i = 0; i < data.train.size(); ++i) {
    lengths[i] = static_cast<Eigen::Index>(data.train[i].link_ids.size());
  }

  std::optional<wdr::WdrModel> best_model;
  double best_mape = std::numeric_limits<double>::infinity();
  std::int64_t best_step = 0;
  int evals_since_best = 0;
  bool stop = false;

  std::int64_t step = 0;
  for (std::int64_t epoch = 0; !stop && step < config.max_steps; ++epoch) {
    const auto batches = make_batches(lengths, config.batch_size, config.seed, epoch);
    for (const auto& indices : batches) {
      if (stop || step >= config.max_steps) break;
      ++step;

      const Batch batch = assemble_batch(data.train, indices, catalog, scalers, observed, schedule);
      wdr::ForwardCache cache;
      const Vector pred = wdr::forward(model, batch.features, &cache);
      const double l_main = mape_loss(pred, batch.targets);

      if (!std::isfinite(l_main)) {
        result.aborted = true;
        result.abort_reason = "non-finite main loss at step " + std::to_string(step);
        break;
      }

      grads.set_zero();
      const Vector d_pred = main_weight * mape_loss_backward(pred, batch.targets);
      wdr::backward(model, cache, d_pred, grads);

      double l_aux = 0.0;
      if (use_aux) {
        const auto samples = metric::sample_triangles(batch.distinct_links, *q,
                                                      config.aux.triangles_per_batch, aux_rng);
        Matrix aux_grad = Matrix::Zero(model.link_emb.rows(), model.link_emb.cols());
        l_aux = metric::triangle_loss(model.link_emb, samples, config.aux, &aux_grad);
        grads.link_emb += config.beta * aux_grad;
      }

      const double norm = global_grad_norm(grad_refs);
      if (config.clip_norm > 0.0 && norm > config.clip_norm) {
        const double scale = config.clip_norm / norm;
        for (const auto& g : grad_refs) g.flat() *= scale;
        ++result.clip_events;
      }
      adam.step(param_refs, grad_refs);

      if (config.log_every > 0 && step % config.log_every == 0) {
        const auto m = eval::metrics(batch.targets, pred);
        push_row({step, "train", m.mape, m.mae, m.rmse, l_main, l_aux});
      }
      if (config.eval_every > 0 && step % config.eval_every == 0) {
        const double v = run_validation(step);
        if (std::isfinite(v) && v < best_mape) {
          best_mape = v;
          best_step = step;
          best_model = model;
          evals_since_best = 0;
        } else {
          ++evals_since_best;
          if (config.patience > 0 && evals_since_best >= config.patience) stop = true;
        }
      }
    }
    if (result.aborted) break;
  }

  // final validation point if the loop ended between scheduled evals
  if (!result.aborted && (config.eval_every <= 0 || step % config.eval_every != 0)) {
    const double v = run_validation(step);
    if (std::isfinite(v) && v < best_mape) {
      best_mape = v;
      best_step = step;
      best_model = model;
    }
  }

  result.steps_run = step;
  result.best_valid_mape = best_mape;
  result.best_step = best_step;
  result.best.model = best_model ? std::move(*best_model) : std::move(model);
  return result;
}

}  // namespace rnml::trainer
