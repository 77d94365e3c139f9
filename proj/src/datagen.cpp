#include "rnml/datagen.hpp"

#include "rnml/similarity.hpp"

#include "json.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

namespace rnml {

namespace {

// Road class from the base-speed tercile of [3, 25] m/s. Slow links behave
// like signalized local streets (deep peak dips), fast links like freeways.
enum class RoadClass { local, arterial, freeway };

RoadClass classify(double base_speed_mps) {
  if (base_speed_mps < 3.0 + 22.0 / 3.0) return RoadClass::local;
  if (base_speed_mps < 3.0 + 44.0 / 3.0) return RoadClass::arterial;
  return RoadClass::freeway;
}

std::array<double, kTimeBins> draw_peak_profile(RoadClass cls, Rng& rng) {
  double d1 = 0.0, d2 = 0.0, off = 1.0;
  switch (cls) {
    case RoadClass::local:
      d1 = rng.uniform(0.10, 0.30);
      d2 = rng.uniform(0.15, 0.35);
      off = rng.uniform(0.92, 1.08);
      break;
    case RoadClass::arterial:
      d1 = rng.uniform(0.25, 0.50);
      d2 = rng.uniform(0.30, 0.55);
      off = rng.uniform(0.92, 1.08);
      break;
    case RoadClass::freeway:
      d1 = rng.uniform(0.00, 0.10);
      d2 = rng.uniform(0.00, 0.12);
      off = rng.uniform(0.97, 1.06);
      break;
  }
  return {1.0 - d1, 1.0 - d2, off};
}

double round3(double v) { return std::round(v * 1000.0) / 1000.0; }

}  // namespace

double Trip::total_length_m(const LinkCatalog& catalog) const {
  double sum = 0.0;
  for (auto id : link_ids) sum += catalog.at(id).length_m;
  return sum;
}

std::int64_t CoverageTable::total() const {
  return std::accumulate(counts.begin(), counts.end(), std::int64_t{0});
}

LinkCatalog generate_network(const NetworkConfig& config) {
  if (config.m < 3) throw std::invalid_argument("generate_network: need at least 3 links");

  LinkCatalog catalog;
  catalog.links.resize(static_cast<std::size_t>(config.m));

  // Zipf-like popularity over a random rank permutation, so hot links are
  // scattered across road classes.
  std::vector<std::int32_t> ranks(static_cast<std::size_t>(config.m));
  std::iota(ranks.begin(), ranks.end(), 1);
  Rng rank_rng(hash_combine(config.seed, 0x5261'6e6b));
  rank_rng.shuffle(ranks);

  for (std::int32_t i = 0; i < config.m; ++i) {
    Rng rng(hash_combine(hash_combine(config.seed, 0x4c69'6e6b), static_cast<std::uint64_t>(i)));
    LinkSpec& link = catalog.links[static_cast<std::size_t>(i)];
    link.link_id = i + 1;
    link.length_m = rng.log_uniform(50.0, 2000.0);
    link.base_speed_mps = rng.uniform(3.0, 25.0);
    link.peak_profile = draw_peak_profile(classify(link.base_speed_mps), rng);
    link.popularity = std::pow(static_cast<double>(ranks[static_cast<std::size_t>(i)]),
                               -config.zipf_exponent);
  }
  return catalog;
}

double trip_travel_time(const std::vector<double>& lengths_m,
                        const std::vector<double>& speeds_mps,
                        double total_wait_s) {
  if (lengths_m.size() != speeds_mps.size()) {
    throw std::invalid_argument("trip_travel_time: length/speed size mismatch");
  }
  KahanSum time;
  for (std::size_t j = 0; j < lengths_m.size(); ++j) time.add(lengths_m[j] / speeds_mps[j]);
  time.add(total_wait_s);
  return time.value();
}

std::vector<Trip> generate_trips(const LinkCatalog& catalog, const TripGenConfig& config) {
  if (catalog.size() == 0) throw std::invalid_argument("generate_trips: empty catalog");
  if (config.n_trips < 1) throw std::invalid_argument("generate_trips: need n_trips >= 1");
  if (config.drivers < 1) throw std::invalid_argument("generate_trips: need drivers >= 1");

  std::vector<double> pop_cdf(static_cast<std::size_t>(catalog.size()));
  std::vector<double> local_cdf(static_cast<std::size_t>(catalog.size()));
  double acc = 0.0;
  double local_acc = 0.0;
  for (std::int32_t i = 0; i < catalog.size(); ++i) {
    acc += catalog.links[static_cast<std::size_t>(i)].popularity;
    local_acc += std::pow(catalog.links[static_cast<std::size_t>(i)].popularity, config.local_temp);
    pop_cdf[static_cast<std::size_t>(i)] = acc;
    local_cdf[static_cast<std::size_t>(i)] = local_acc;
  }

  const auto horizon_s = static_cast<std::int64_t>(config.weeks * kWeekSeconds);
  const TimeBinSchedule schedule = TimeBinSchedule::default_k3();
  const double mu_log = -0.5 * config.speed_sigma * config.speed_sigma;  // mean-one noise

  std::vector<Trip> trips(static_cast<std::size_t>(config.n_trips));
  parallel_for(static_cast<std::size_t>(config.n_trips), [&](std::size_t idx) {
    const std::int64_t trip_id = static_cast<std::int64_t>(idx) + 1;
    Rng rng(hash_combine(config.seed, static_cast<std::uint64_t>(trip_id)));

    Trip trip;
    trip.trip_id = trip_id;
    for (int attempt = 0; attempt < 10000; ++attempt) {
      trip.driver_id = static_cast<std::int32_t>(1 + rng.below(config.drivers));
      trip.depart_ts = kEpochStart + static_cast<std::int64_t>(rng.uniform01() *
                                                               static_cast<double>(horizon_s));
      const int bin = schedule.bin_of(trip.depart_ts);
      const bool local = rng.uniform01() < config.local_trip_prob;
      const auto& cdf = local ? local_cdf : pop_cdf;
      const double mass = local ? local_acc : acc;

      const auto n_links = rng.geometric_min1(config.mean_links);
      trip.link_ids.resize(static_cast<std::size_t>(n_links));
      trip.link_speeds_mps.resize(static_cast<std::size_t>(n_links));

      double total_len = 0.0;
      double total_wait = 0.0;
      std::vector<double> lengths(static_cast<std::size_t>(n_links));
      for (std::int64_t j = 0; j < n_links; ++j) {
        double u = rng.uniform01() * mass;
        auto it = std::lower_bound(cdf.begin(), cdf.end(), u);
        auto col = static_cast<std::int32_t>(it - cdf.begin());
        if (col >= catalog.size()) col = catalog.size() - 1;
        const LinkSpec& link = catalog.links[static_cast<std::size_t>(col)];

        double speed = link.base_speed_mps * link.peak_profile[static_cast<std::size_t>(bin - 1)] *
                       rng.lognormal(mu_log, config.speed_sigma);
        trip.link_ids[static_cast<std::size_t>(j)] = link.link_id;
        trip.link_speeds_mps[static_cast<std::size_t>(j)] = round3(speed);
        lengths[static_cast<std::size_t>(j)] = link.length_m;
        total_len += link.length_m;
        total_wait += rng.exponential(link.mean_wait_s() * config.mean_wait_scale);
      }

      trip.travel_time_s = round3(trip_travel_time(lengths, trip.link_speeds_mps, total_wait));
      if (trip.travel_time_s >= kMinTravelTimeS &&
          total_len / trip.travel_time_s <= kMaxMeanSpeedMps) {
        trips[idx] = trip;
        return;
      }
    }
    throw degenerate_data_error("generate_trips: could not satisfy outlier bounds for trip " +
                                std::to_string(trip_id));
  });
  return trips;
}

DatasetSplit split_dataset(std::vector<Trip> trips, const std::array<double, 3>& fractions) {
  double sum = fractions[0] + fractions[1] + fractions[2];
  if (fractions[0] < 0 || fractions[1] < 0 || fractions[2] < 0 || std::abs(sum - 1.0) > 1e-9) {
    throw std::invalid_argument("split_dataset: fractions must be non-negative and sum to 1");
  }
  std::sort(trips.begin(), trips.end(), [](const Trip& a, const Trip& b) {
    return a.depart_ts != b.depart_ts ? a.depart_ts < b.depart_ts : a.trip_id < b.trip_id;
  });

  const auto n = static_cast<double>(trips.size());
  const auto b1 = static_cast<std::size_t>(std::llround(fractions[0] * n));
  const auto b2 = static_cast<std::size_t>(std::llround((fractions[0] + fractions[1]) * n));

  DatasetSplit split;
  split.train.assign(trips.begin(), trips.begin() + static_cast<std::ptrdiff_t>(b1));
  split.valid.assign(trips.begin() + static_cast<std::ptrdiff_t>(b1),
                     trips.begin() + static_cast<std::ptrdiff_t>(b2));
  split.test.assign(trips.begin() + static_cast<std::ptrdiff_t>(b2), trips.end());
  return split;
}

CoverageTable coverage_counts(const std::vector<Trip>& train, std::int32_t m) {
  CoverageTable table;
  table.counts.assign(static_cast<std::size_t>(m), 0);
  std::vector<std::int64_t> last_trip(static_cast<std::size_t>(m), -1);
  for (std::size_t i = 0; i < train.size(); ++i) {
    for (auto id : train[i].link_ids) {
      if (id < 1 || id > m) {
        throw data_error("coverage_counts: link id " + std::to_string(id) + " outside [1, " +
                         std::to_string(m) + "]");
      }
      auto& seen = last_trip[static_cast<std::size_t>(id - 1)];
      if (seen != static_cast<std::int64_t>(i)) {
        seen = static_cast<std::int64_t>(i);
        ++table.counts[static_cast<std::size_t>(id - 1)];
      }
    }
  }
  return table;
}

// --- persistence -------------------------------------------------------------

void write_catalog_csv(const LinkCatalog& catalog, std::ostream& out) {
  out << "link_id,length_m,base_speed_mps,mult_bin1,mult_bin2,mult_bin3,popularity\n";
  for (const LinkSpec& link : catalog.links) {
    out << link.link_id << ',' << format_double(link.length_m) << ','
        << format_double(link.base_speed_mps) << ',' << format_double(link.peak_profile[0]) << ','
        << format_double(link.peak_profile[1]) << ',' << format_double(link.peak_profile[2]) << ','
        << format_double(link.popularity) << '\n';
  }
}

void write_catalog_csv(const LinkCatalog& catalog, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error("cannot open " + path + " for writing");
  write_catalog_csv(catalog, out);
}

LinkCatalog read_catalog_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) ||
      line != "link_id,length_m,base_speed_mps,mult_bin1,mult_bin2,mult_bin3,popularity") {
    throw data_error("catalog csv: bad header");
  }
  LinkCatalog catalog;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    LinkSpec link;
    auto next = [&](const char* what) {
      if (!std::getline(ss, field, ',')) throw data_error(std::string("catalog csv: missing ") + what);
      return field;
    };
    link.link_id = static_cast<std::int32_t>(std::stol(next("link_id")));
    link.length_m = std::stod(next("length_m"));
    link.base_speed_mps = std::stod(next("base_speed_mps"));
    link.peak_profile[0] = std::stod(next("mult_bin1"));
    link.peak_profile[1] = std::stod(next("mult_bin2"));
    link.peak_profile[2] = std::stod(next("mult_bin3"));
    link.popularity = std::stod(next("popularity"));
    catalog.links.push_back(link);
  }
  for (std::size_t i = 0; i < catalog.links.size(); ++i) {
    if (catalog.links[i].link_id != static_cast<std::int32_t>(i + 1)) {
      throw data_error("catalog csv: link ids must be contiguous from 1");
    }
  }
  return catalog;
}

LinkCatalog read_catalog_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("cannot open " + path);
  return read_catalog_csv(in);
}

void write_trips_jsonl(const std::vector<Trip>& trips, std::ostream& out) {
  for (const Trip& trip : trips) {
    out << "{\"trip_id\":" << trip.trip_id << ",\"driver_id\":" << trip.driver_id
        << ",\"depart_ts\":" << trip.depart_ts << ",\"links\":[";
    for (std::size_t j = 0; j < trip.link_ids.size(); ++j) {
      if (j) out << ',';
      out << trip.link_ids[j];
    }
    out << "],\"speeds\":[";
    for (std::size_t j = 0; j < trip.link_speeds_mps.size(); ++j) {
      if (j) out << ',';
      out << format_fixed(trip.link_speeds_mps[j], 3);
    }
    out << "],\"travel_time_s\":" << format_fixed(trip.travel_time_s, 3) << "}\n";
  }
}

void write_trips_jsonl(const std::vector<Trip>& trips, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error("cannot open " + path + " for writing");
  write_trips_jsonl(trips, out);
}

std::vector<Trip> read_trips_jsonl(std::istream& in) {
  std::vector<Trip> trips;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    Trip trip;
    try {
      const nlohmann::json j = nlohmann::json::parse(line);
      trip.trip_id = j.at("trip_id").get<std::int64_t>();
      trip.driver_id = j.at("driver_id").get<std::int32_t>();
      trip.depart_ts = j.at("depart_ts").get<std::int64_t>();
      trip.link_ids = j.at("links").get<std::vector<std::int32_t>>();
      trip.link_speeds_mps = j.at("speeds").get<std::vector<double>>();
      trip.travel_time_s = j.at("travel_time_s").get<double>();
    } catch (const nlohmann::json::exception& e) {
      throw data_error("trips jsonl line " + std::to_string(lineno) + ": " + e.what());
    }
    if (trip.link_ids.size() != trip.link_speeds_mps.size() || trip.link_ids.empty()) {
      throw data_error("trips jsonl line " + std::to_string(lineno) + ": links/speeds mismatch");
    }
    trips.push_back(std::move(trip));
  }
  return trips;
}

std::vector<Trip> read_trips_jsonl(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("cannot open " + path);
  return read_trips_jsonl(in);
}

}  // namespace rnml
