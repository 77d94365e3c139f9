#ifndef RNML_DATAGEN_HPP
#define RNML_DATAGEN_HPP

#include "rnml/core.hpp"

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace rnml {

// Number of daily time bins used for peak profiles and speed histograms.
inline constexpr int kTimeBins = 3;

// 2018-01-01 00:00:00 UTC, a Monday. All synthetic timestamps count up from here.
inline constexpr std::int64_t kEpochStart = 1514764800;
inline constexpr std::int64_t kWeekSeconds = 7 * 86400;

// Outlier bounds enforced on every emitted trip.
inline constexpr double kMinTravelTimeS = 60.0;
inline constexpr double kMaxMeanSpeedMps = 120.0 / 3.6;

struct LinkSpec {
  std::int32_t link_id = 0;  // 1-based, contiguous 1..M
  double length_m = 0.0;
  double base_speed_mps = 0.0;
  std::array<double, kTimeBins> peak_profile{1.0, 1.0, 1.0};
  double popularity = 0.0;

  // Expected intersection wait when leaving this link, reconstructed from the
  // peak profile so it survives a catalog round-trip. Links that slow down a
  // lot at peak hours (signalized roads) wait longer; fleet average ~8 s.
  double mean_wait_s() const {
    double depth = 0.5 * ((1.0 - peak_profile[0]) + (1.0 - peak_profile[1]));
    return 1.5 + 28.68 * std::max(0.0, depth);
  }
};

struct LinkCatalog {
  std::vector<LinkSpec> links;  // links[i].link_id == i + 1

  std::int32_t size() const { return static_cast<std::int32_t>(links.size()); }
  const LinkSpec& at(std::int32_t link_id) const {
    if (link_id < 1 || link_id > size()) {
      throw data_error("link id " + std::to_string(link_id) + " outside [1, " +
                       std::to_string(size()) + "]");
    }
    return links[static_cast<std::size_t>(link_id - 1)];
  }
};

struct Trip {
  std::int64_t trip_id = 0;
  std::int32_t driver_id = 0;  // 1-based
  std::int64_t depart_ts = 0;  // seconds since epoch (UTC == local here)
  std::vector<std::int32_t> link_ids;
  std::vector<double> link_speeds_mps;
  double travel_time_s = 0.0;

  std::int64_t length() const { return static_cast<std::int64_t>(link_ids.size()); }
  double total_length_m(const LinkCatalog& catalog) const;
};

struct CoverageTable {
  std::vector<std::int64_t> counts;  // counts[link_id - 1]

  std::int64_t at(std::int32_t link_id) const { return counts[static_cast<std::size_t>(link_id - 1)]; }
  std::int64_t total() const;
};

struct NetworkConfig {
  std::int32_t m = 0;
  std::uint64_t seed = 0;
  double zipf_exponent = 1.1;
};

struct TripGenConfig {
  std::int64_t n_trips = 0;
  std::int32_t drivers = 1;
  std::uint64_t seed = 0;
  double weeks = 27.0;           // 25 train + 1 valid + 1 test worth of timestamps
  double mean_links = 20.0;      // geometric walk length, min 1
  double speed_sigma = 0.2;      // log-normal speed noise (mean-one)
  double mean_wait_scale = 1.0;  // multiplies every link's mean_wait_s

  // A fraction of trips run through quiet neighborhoods: they sample links
  // with the popularity weights flattened to popularity^local_temp, which
  // concentrates rarely-traversed links inside single trips (the cold-link
  // regime) instead of scattering them thinly over all trips.
  double local_trip_prob = 0.06;
  double local_temp = 0.0;
};

LinkCatalog generate_network(const NetworkConfig& config);
inline LinkCatalog generate_network(std::int32_t m, std::uint64_t seed) {
  return generate_network(NetworkConfig{m, seed, 1.1});
}

std::vector<Trip> generate_trips(const LinkCatalog& catalog, const TripGenConfig& config);

// Pure trip physics: sum of per-link drive times plus waits.
double trip_travel_time(const std::vector<double>& lengths_m,
                        const std::vector<double>& speeds_mps,
                        double total_wait_s);

// Chronological split by depart_ts (ties broken by trip_id). Fractions must be
// non-negative and sum to 1.
struct DatasetSplit {
  std::vector<Trip> train;
  std::vector<Trip> valid;
  std::vector<Trip> test;
};
DatasetSplit split_dataset(std::vector<Trip> trips, const std::array<double, 3>& fractions);

// Trips-per-link counts over the training partition: a trip visiting a link
// twice counts once.
CoverageTable coverage_counts(const std::vector<Trip>& train, std::int32_t m);

// --- persistence -----------------------------------------------------------

void write_catalog_csv(const LinkCatalog& catalog, std::ostream& out);
void write_catalog_csv(const LinkCatalog& catalog, const std::string& path);
LinkCatalog read_catalog_csv(std::istream& in);
LinkCatalog read_catalog_csv(const std::string& path);

void write_trips_jsonl(const std::vector<Trip>& trips, std::ostream& out);
void write_trips_jsonl(const std::vector<Trip>& trips, const std::string& path);
std::vector<Trip> read_trips_jsonl(std::istream& in);
std::vector<Trip> read_trips_jsonl(const std::string& path);

}  // namespace rnml

#endif  // RNML_DATAGEN_HPP
