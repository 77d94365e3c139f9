#include "rnml/config.hpp"
#include "rnml/datagen.hpp"
#include "rnml/evaluator.hpp"
#include "rnml/metric.hpp"
#include "rnml/similarity.hpp"
#include "rnml/trainer.hpp"
#include "rnml/wdr.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

// 0 success, 2 usage, 3 data error, 4 missing prerequisite
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitMissing = 4;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void ensure_out_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  std::ofstream probe(dir / ".write_probe", std::ios::binary);
  if (ec || !probe) throw UsageError("output path not writable: " + dir.string());
  probe.close();
  fs::remove(dir / ".write_probe", ec);
}

void write_manifest(const fs::path& dir, const std::string& command, const json& args) {
  json manifest;
  manifest["tool"] = "rnml";
  manifest["version"] = kVersion;
  manifest["command"] = command;
  manifest["args"] = args;
  std::ofstream out(dir / "manifest.json", std::ios::binary);
  if (!out) throw rnml::data_error("cannot write manifest in " + dir.string());
  out << manifest.dump(2) << '\n';
}

struct LoadedData {
  rnml::LinkCatalog catalog;
  rnml::DatasetSplit split;
  json splits_meta;
};

LoadedData load_data_dir(const fs::path& dir) {
  const fs::path catalog_path = dir / "catalog.csv";
  const fs::path trips_path = dir / "trips.jsonl";
  const fs::path splits_path = dir / "splits.json";
  if (!fs::exists(catalog_path) || !fs::exists(trips_path) || !fs::exists(splits_path)) {
    throw rnml::missing_prerequisite_error("data dir " + dir.string() +
                                           " is missing catalog.csv/trips.jsonl/splits.json; run "
                                           "`rnml gen` first");
  }
  LoadedData data;
  data.catalog = rnml::read_catalog_csv(catalog_path.string());
  auto trips = rnml::read_trips_jsonl(trips_path.string());

  std::ifstream in(splits_path, std::ios::binary);
  json splits = json::parse(in);
  data.splits_meta = splits;
  const auto n_train = splits.at("counts").at("train").get<std::size_t>();
  const auto n_valid = splits.at("counts").at("valid").get<std::size_t>();
  const auto n_test = splits.at("counts").at("test").get<std::size_t>();
  if (n_train + n_valid + n_test != trips.size()) {
    throw rnml::data_error("splits.json counts do not match trips.jsonl");
  }
  data.split.train.assign(trips.begin(), trips.begin() + static_cast<std::ptrdiff_t>(n_train));
  data.split.valid.assign(trips.begin() + static_cast<std::ptrdiff_t>(n_train),
                          trips.begin() + static_cast<std::ptrdiff_t>(n_train + n_valid));
  data.split.test.assign(trips.begin() + static_cast<std::ptrdiff_t>(n_train + n_valid),
                         trips.end());
  return data;
}

std::vector<double> parse_deltas(const std::string& spec) {
  std::vector<double> deltas;
  if (spec.empty()) return deltas;
  const auto c1 = spec.find(':');
  if (c1 != std::string::npos) {
    const auto c2 = spec.find(':', c1 + 1);
    if (c2 == std::string::npos) throw UsageError("--deltas expects start:stop:step or a,b,c");
    const double start = std::stod(spec.substr(0, c1));
    const double stop = std::stod(spec.substr(c1 + 1, c2 - c1 - 1));
    const double step = std::stod(spec.substr(c2 + 1));
    if (step <= 0) throw UsageError("--deltas step must be positive");
    for (double d = start; d <= stop + 1e-9; d += step) deltas.push_back(d);
    return deltas;
  }
  std::stringstream ss(spec);
  std::string field;
  while (std::getline(ss, field, ',')) {
    if (!field.empty()) deltas.push_back(std::stod(field));
  }
  return deltas;
}

// --- gen ---------------------------------------------------------------------

struct GenArgs {
  std::int32_t m = 1000;
  std::int64_t trips = 10000;
  std::int32_t drivers = 100;
  std::uint64_t seed = 0;
  std::string out_dir;
  double zipf = 1.1;
  double weeks = 27.0;
  double sigma = 0.2;
  double mean_links = 20.0;
  std::vector<double> fractions{25.0 / 27.0, 1.0 / 27.0, 1.0 / 27.0};
};

int run_gen(const GenArgs& args) {
  if (args.m < 3) throw UsageError("need at least 3 links (--m >= 3)");
  const fs::path out(args.out_dir);
  ensure_out_dir(out);
  if (args.fractions.size() != 3) throw UsageError("--fractions expects three values");

  rnml::NetworkConfig net{args.m, args.seed, args.zipf};
  const auto catalog = rnml::generate_network(net);

  rnml::TripGenConfig gen;
  gen.n_trips = args.trips;
  gen.drivers = args.drivers;
  gen.seed = args.seed;
  gen.weeks = args.weeks;
  gen.speed_sigma = args.sigma;
  gen.mean_links = args.mean_links;
  auto trips = rnml::generate_trips(catalog, gen);

  const std::array<double, 3> fractions{args.fractions[0], args.fractions[1], args.fractions[2]};
  auto split = rnml::split_dataset(std::move(trips), fractions);

  rnml::write_catalog_csv(catalog, (out / "catalog.csv").string());
  std::vector<rnml::Trip> ordered;
  ordered.reserve(static_cast<std::size_t>(args.trips));
  for (auto* part : {&split.train, &split.valid, &split.test}) {
    ordered.insert(ordered.end(), part->begin(), part->end());
  }
  rnml::write_trips_jsonl(ordered, (out / "trips.jsonl").string());

  json splits;
  splits["order"] = "chronological";
  splits["fractions"] = args.fractions;
  splits["counts"] = {{"train", split.train.size()},
                      {"valid", split.valid.size()},
                      {"test", split.test.size()}};
  splits["m"] = args.m;
  splits["drivers"] = args.drivers;
  splits["seed"] = args.seed;
  if (!split.train.empty() && !split.valid.empty()) {
    splits["train_end_ts"] = split.train.back().depart_ts;
    splits["valid_begin_ts"] = split.valid.front().depart_ts;
  }
  {
    std::ofstream sout(out / "splits.json", std::ios::binary);
    if (!sout) throw rnml::data_error("cannot write splits.json");
    sout << splits.dump(2) << '\n';
  }

  write_manifest(out, "gen",
                 json{{"m", args.m},
                      {"trips", args.trips},
                      {"drivers", args.drivers},
                      {"seed", args.seed},
                      {"zipf", args.zipf},
                      {"weeks", args.weeks},
                      {"sigma", args.sigma},
                      {"mean_links", args.mean_links},
                      {"fractions", args.fractions}});
  std::cout << "gen: wrote " << split.train.size() << "/" << split.valid.size() << "/"
            << split.test.size() << " train/valid/test trips over " << args.m << " links to "
            << out.string() << "\n";
  return 0;
}

// --- similarity ----------------------------------------------------------------

int run_similarity(const std::string& data_dir, std::string out_path, const std::string& dump_q) {
  const auto data = load_data_dir(data_dir);
  if (out_path.empty()) out_path = (fs::path(data_dir) / "histograms.csv").string();

  const auto schedule = rnml::TimeBinSchedule::default_k3();
  const auto stats = rnml::bin_average_speeds(data.split.train, schedule, data.catalog.size());
  const auto histograms = rnml::normalize(stats);
  rnml::write_histograms_csv(histograms, out_path);

  if (!dump_q.empty()) {
    const auto q = rnml::DifferenceMatrix::build(histograms, rnml::DifferenceMatrix::Storage::dense);
    q.write_binary(dump_q);
  }
  write_manifest(fs::path(out_path).parent_path(), "similarity",
                 json{{"data_dir", data_dir}, {"out", out_path}, {"dump_q", dump_q}});
  std::cout << "similarity: wrote histograms for " << histograms.size() << " links to " << out_path
            << "\n";
  return 0;
}

// --- train -----------------------------------------------------------------------

struct TrainArgs {
  std::string data_dir;
  std::string config_path;
  std::string model;
  double beta = -1.0;  // <0 = not set
  std::int64_t seed = -1;
  std::int64_t steps = -1;
  std::string out_dir;
};

rnml::trainer::TrainConfig resolve_train_config(const TrainArgs& args, rnml::KvConfig& kv) {
  if (!args.config_path.empty()) kv = rnml::KvConfig::load(args.config_path);
  auto config = rnml::train_config_from(kv);
  if (!args.model.empty()) config.variant = rnml::wdr::variant_from_name(args.model);
  if (args.beta >= 0.0) {
    if (config.variant != rnml::wdr::Variant::rnml) {
      throw UsageError("--beta requires --model rnml (beta requires rnml)");
    }
    config.beta = args.beta;
  }
  if (args.seed >= 0) config.seed = static_cast<std::uint64_t>(args.seed);
  if (args.steps >= 0) config.max_steps = args.steps;
  return config;
}

json config_json(const rnml::trainer::TrainConfig& c) {
  return json{{"variant", rnml::wdr::variant_name(c.variant)},
              {"batch_size", c.batch_size},
              {"lr", c.lr},
              {"max_steps", c.max_steps},
              {"beta", c.beta},
              {"seed", c.seed},
              {"eval_every", c.eval_every},
              {"patience", c.patience},
              {"clip_norm", c.clip_norm},
              {"hidden", c.hidden},
              {"link_emb_dim", c.link_emb_dim},
              {"aux.margins", c.aux.margins},
              {"aux.gammas", c.aux.gammas},
              {"aux.triangles_per_batch", c.aux.triangles_per_batch}};
}

int run_train(const TrainArgs& args) {
  rnml::KvConfig kv;
  auto config = resolve_train_config(args, kv);
  std::string data_dir = !args.data_dir.empty() ? args.data_dir : kv.get_string("data.dir", "");
  if (data_dir.empty()) throw UsageError("need --data-dir (or data.dir in the config file)");
  if (args.out_dir.empty()) throw UsageError("need --out-dir");

  const fs::path out(args.out_dir);
  ensure_out_dir(out);
  const auto data = load_data_dir(data_dir);

  std::optional<rnml::DifferenceMatrix> q;
  if (config.variant == rnml::wdr::Variant::rnml) {
    const fs::path hist_path = fs::path(data_dir) / "histograms.csv";
    if (!fs::exists(hist_path)) {
      throw rnml::missing_prerequisite_error(
          "rnml needs " + hist_path.string() + "; run `rnml similarity --data-dir " + data_dir +
          "` first");
    }
    const auto histograms = rnml::read_histograms_csv(hist_path.string());
    q = rnml::DifferenceMatrix::build(histograms, rnml::DifferenceMatrix::Storage::on_demand);
  }

  std::ofstream log_stream(out / "train_log.csv", std::ios::binary);
  if (!log_stream) throw rnml::data_error("cannot write train_log.csv");
  log_stream << "step,split,mape,mae,rmse,l_main,l_aux\n" << std::flush;
  config.on_log = [&](const rnml::trainer::LogRow& row) {
    log_stream << rnml::trainer::log_row_csv(row) << '\n' << std::flush;
    if (row.split == "valid") {
      std::cout << "step " << row.step << " valid mape " << row.mape << std::endl;
    }
  };

  const auto result =
      rnml::trainer::train(config, data.split, data.catalog, q ? &*q : nullptr);
  config.on_log = nullptr;
  log_stream.close();
  rnml::save_checkpoint((out / "checkpoint.bin").string(), result.best.to_tensors());

  json manifest_args = config_json(config);
  manifest_args["data_dir"] = data_dir;
  manifest_args["best_valid_mape"] = result.best_valid_mape;
  manifest_args["best_step"] = result.best_step;
  manifest_args["steps_run"] = result.steps_run;
  manifest_args["clip_events"] = result.clip_events;
  manifest_args["aborted"] = result.aborted;
  write_manifest(out, "train", manifest_args);

  if (result.aborted) {
    std::cerr << "train: aborted (" << result.abort_reason << "); last good checkpoint kept\n";
    return kExitData;
  }
  std::cout << "train: " << rnml::wdr::variant_name(config.variant) << " ran "
            << result.steps_run << " steps, best valid MAPE " << result.best_valid_mape
            << " at step " << result.best_step << "\n";
  return 0;
}

// --- eval ------------------------------------------------------------------------

int run_eval(const std::string& checkpoint_path, const std::string& data_dir,
             const std::string& deltas_spec, std::string out_dir) {
  if (!fs::exists(checkpoint_path)) {
    throw rnml::missing_prerequisite_error("checkpoint not found: " + checkpoint_path);
  }
  const auto data = load_data_dir(data_dir);
  const auto ckpt = rnml::wdr::Checkpoint::from_tensors(rnml::load_checkpoint(checkpoint_path));
  const auto deltas = parse_deltas(deltas_spec);
  if (out_dir.empty()) out_dir = fs::path(checkpoint_path).parent_path().string();
  ensure_out_dir(out_dir);

  const auto schedule = rnml::TimeBinSchedule::default_k3();
  const auto coverage = rnml::coverage_counts(data.split.train, data.catalog.size());

  rnml::Vector pred;
  if (ckpt.variant == rnml::wdr::Variant::route_eta) {
    pred.resize(static_cast<Eigen::Index>(data.split.test.size()));
    for (std::size_t i = 0; i < data.split.test.size(); ++i) {
      pred(static_cast<Eigen::Index>(i)) = ckpt.route->predict(data.split.test[i], data.catalog);
    }
  } else {
    const auto stats = rnml::bin_average_speeds(data.split.train, schedule, data.catalog.size());
    rnml::wdr::HistoricalSpeeds speeds(stats);
    pred = rnml::wdr::batch_predict(*ckpt.model, data.split.test, data.catalog, ckpt.scalers,
                                    speeds, schedule);
  }

  const auto report = rnml::eval::sweep(data.split.test, coverage, deltas,
                                        {{rnml::wdr::variant_name(ckpt.variant), pred}});
  rnml::eval::write_report_json(report, (fs::path(out_dir) / "report.json").string());
  rnml::eval::write_report_csv(report, (fs::path(out_dir) / "report.csv").string());
  write_manifest(out_dir, "eval",
                 json{{"checkpoint", checkpoint_path},
                      {"data_dir", data_dir},
                      {"deltas", deltas}});

  const auto& overall = report.variants.front().strata.front();
  std::cout << "eval: " << rnml::wdr::variant_name(ckpt.variant) << " test MAPE "
            << (overall.values ? overall.values->mape : std::nan("")) << " over " << overall.n
            << " trips (" << deltas.size() << " strata)\n";
  return 0;
}

// --- sweep ----------------------------------------------------------------------

int run_sweep(const TrainArgs& base, const std::string& param, const std::string& values_csv,
              const std::string& deltas_spec) {
  if (param != "beta" && param != "alpha2") {
    throw UsageError("--param must be beta or alpha2");
  }
  std::vector<double> values;
  std::stringstream ss(values_csv);
  std::string field;
  while (std::getline(ss, field, ',')) {
    if (!field.empty()) values.push_back(std::stod(field));
  }
  if (values.empty()) throw UsageError("--values must list at least one number");
  if (base.out_dir.empty()) throw UsageError("need --out-dir");

  const fs::path out(base.out_dir);
  ensure_out_dir(out);
  const auto deltas = parse_deltas(deltas_spec);

  std::ofstream merged(out / "sweep.csv", std::ios::binary);
  if (!merged) throw rnml::data_error("cannot write sweep.csv");
  merged << "param,value,variant,delta,n,mape,mae,rmse\n";

  for (double value : values) {
    TrainArgs args = base;
    args.model = "rnml";
    if (param == "beta") args.beta = value;
    rnml::KvConfig kv;
    auto config = resolve_train_config(args, kv);
    if (param == "alpha2") config.aux.margins[1] = value;
    std::string data_dir = !args.data_dir.empty() ? args.data_dir : kv.get_string("data.dir", "");
    if (data_dir.empty()) throw UsageError("need --data-dir (or data.dir in the config file)");

    const auto data = load_data_dir(data_dir);
    const fs::path hist_path = fs::path(data_dir) / "histograms.csv";
    if (!fs::exists(hist_path)) {
      throw rnml::missing_prerequisite_error("rnml needs " + hist_path.string() +
                                             "; run `rnml similarity` first");
    }
    const auto q = rnml::DifferenceMatrix::build(
        rnml::read_histograms_csv(hist_path.string()), rnml::DifferenceMatrix::Storage::on_demand);

    const auto result = rnml::trainer::train(config, data.split, data.catalog, &q);

    const auto schedule = rnml::TimeBinSchedule::default_k3();
    const auto coverage = rnml::coverage_counts(data.split.train, data.catalog.size());
    const auto stats = rnml::bin_average_speeds(data.split.train, schedule, data.catalog.size());
    rnml::wdr::HistoricalSpeeds speeds(stats);
    const auto pred = rnml::wdr::batch_predict(*result.best.model, data.split.test, data.catalog,
                                               result.best.scalers, speeds, schedule);
    const auto report =
        rnml::eval::sweep(data.split.test, coverage, deltas, {{"rnml", pred}});

    for (const auto& stratum : report.variants.front().strata) {
      merged << param << ',' << rnml::format_double(value) << ",rnml,";
      if (stratum.delta) {
        merged << rnml::format_double(*stratum.delta);
      } else {
        merged << "overall";
      }
      merged << ',' << stratum.n << ',';
      if (stratum.values) {
        merged << rnml::format_double(stratum.values->mape) << ','
               << rnml::format_double(stratum.values->mae) << ','
               << rnml::format_double(stratum.values->rmse);
      } else {
        merged << ",,";
      }
      merged << '\n';
    }
    std::cout << "sweep: " << param << "=" << value << " done\n";
  }
  write_manifest(out, "sweep",
                 json{{"param", param}, {"values", values}, {"deltas", deltas_spec}});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"road-network ETA toolkit: synthetic data, WDR training, cold-link evaluation"};
  app.require_subcommand(1);

  GenArgs gen_args;
  auto* gen = app.add_subcommand("gen", "generate a synthetic network and trip dataset");
  gen->add_option("--m", gen_args.m, "number of links");
  gen->add_option("--trips", gen_args.trips, "number of trips");
  gen->add_option("--drivers", gen_args.drivers, "number of drivers");
  gen->add_option("--seed", gen_args.seed, "master seed");
  gen->add_option("--out-dir", gen_args.out_dir, "output directory")->required();
  gen->add_option("--zipf", gen_args.zipf, "popularity Zipf exponent");
  gen->add_option("--weeks", gen_args.weeks, "timestamp horizon in weeks");
  gen->add_option("--sigma", gen_args.sigma, "log-normal speed noise");
  gen->add_option("--mean-links", gen_args.mean_links, "mean links per trip");
  gen->add_option("--fractions", gen_args.fractions, "train,valid,test fractions")->expected(3);

  std::string sim_data_dir, sim_out, sim_dump_q;
  auto* sim = app.add_subcommand("similarity", "compute per-link speed histograms");
  sim->add_option("--data-dir", sim_data_dir, "dataset directory")->required();
  sim->add_option("--out", sim_out, "histogram csv path (default <data-dir>/histograms.csv)");
  sim->add_option("--dump-q", sim_dump_q, "also write the dense Q matrix to this path");

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "train a model variant");
  train->add_option("--data-dir", train_args.data_dir, "dataset directory");
  train->add_option("--config", train_args.config_path, "key=value config file");
  train->add_option("--model", train_args.model, "route-eta|wdr|wdr-nolink|rnml");
  train->add_option("--beta", train_args.beta, "auxiliary task weight (rnml only)");
  train->add_option("--seed", train_args.seed, "training seed");
  train->add_option("--steps", train_args.steps, "max optimization steps");
  train->add_option("--out-dir", train_args.out_dir, "run output directory");

  std::string eval_ckpt, eval_data_dir, eval_deltas, eval_out;
  auto* evalc = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
  evalc->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  evalc->add_option("--data-dir", eval_data_dir, "dataset directory")->required();
  evalc->add_option("--deltas", eval_deltas, "coverage thresholds: start:stop:step or a,b,c");
  evalc->add_option("--out-dir", eval_out, "report directory (default: checkpoint's)");

  TrainArgs sweep_base;
  std::string sweep_param, sweep_values, sweep_deltas;
  auto* sweep = app.add_subcommand("sweep", "rerun train+eval over a hyper-parameter list");
  sweep->add_option("--param", sweep_param, "beta or alpha2")->required();
  sweep->add_option("--values", sweep_values, "comma-separated values")->required();
  sweep->add_option("--data-dir", sweep_base.data_dir, "dataset directory");
  sweep->add_option("--config", sweep_base.config_path, "key=value config file");
  sweep->add_option("--seed", sweep_base.seed, "training seed");
  sweep->add_option("--steps", sweep_base.steps, "max optimization steps");
  sweep->add_option("--out-dir", sweep_base.out_dir, "sweep output directory");
  sweep->add_option("--deltas", sweep_deltas, "coverage thresholds for the merged report");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return e.get_exit_code() == 0 ? 0 : kExitUsage;
  }

  try {
    if (gen->parsed()) return run_gen(gen_args);
    if (sim->parsed()) return run_similarity(sim_data_dir, sim_out, sim_dump_q);
    if (train->parsed()) return run_train(train_args);
    if (evalc->parsed()) return run_eval(eval_ckpt, eval_data_dir, eval_deltas, eval_out);
    if (sweep->parsed()) return run_sweep(sweep_base, sweep_param, sweep_values, sweep_deltas);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const rnml::missing_prerequisite_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitMissing;
  } catch (const rnml::degenerate_data_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const rnml::data_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
