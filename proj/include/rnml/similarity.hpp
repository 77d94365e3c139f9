#ifndef RNML_SIMILARITY_HPP
#define RNML_SIMILARITY_HPP

#include "rnml/core.hpp"

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace rnml {

struct Trip;

// Disjoint hour-of-day bins covering 24h. Default: morning peak 05-11,
// evening peak 16-22, off-peak the rest.
class TimeBinSchedule {
 public:
  static TimeBinSchedule default_k3();

  // hour_bins[h] = 1-based bin of local hour h
  explicit TimeBinSchedule(const std::array<int, 24>& hour_bins);

  int bins() const { return k_; }
  int bin_of_hour(int hour) const { return hour_bins_[static_cast<std::size_t>(hour)]; }

  // 1-based bin containing the local time of ts (local == UTC in this toolkit).
  int bin_of(std::int64_t ts) const {
    auto sec = ((ts % 86400) + 86400) % 86400;
    return hour_bins_[static_cast<std::size_t>(sec / 3600)];
  }

 private:
  std::array<int, 24> hour_bins_{};
  int k_ = 0;
};

// Raw per-link per-bin mean speeds. means(k, l-1) is the average observed
// speed of link l among traversals whose trip departed in bin k+1; bins with
// zero support are imputed with that bin's global mean and flagged.
struct BinSpeedStats {
  Matrix means;                              // K x M
  Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic> support;  // K x M
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> imputed;          // K x M
  std::vector<double> global_bin_mean;       // per bin, traversal-weighted

  int bins() const { return static_cast<int>(means.rows()); }
  std::int32_t links() const { return static_cast<std::int32_t>(means.cols()); }
};

BinSpeedStats bin_average_speeds(const std::vector<Trip>& train, const TimeBinSchedule& schedule,
                                 std::int32_t m);

struct SpeedHistogram {
  std::int32_t link_id = 0;
  std::vector<double> values;          // normalized to [0, 1]
  std::vector<std::int64_t> support;   // traversal counts per bin
  std::vector<bool> imputed;
};

// Min-max scaling with one global (a, b) over all K*M raw means.
std::vector<SpeedHistogram> normalize(const BinSpeedStats& stats);

// Pairwise L2 distances between speed histograms. Either materialized dense
// (M x M) or computed per query from the K x M histogram values; the two modes
// agree exactly.
class DifferenceMatrix {
 public:
  enum class Storage { dense, on_demand };

  static DifferenceMatrix build(const std::vector<SpeedHistogram>& histograms,
                                Storage storage = Storage::dense);

  double lookup(std::int32_t i, std::int32_t j) const;
  std::int32_t links() const { return m_; }
  Storage storage() const { return storage_; }

  void write_binary(std::ostream& out) const;
  void write_binary(const std::string& path) const;
  static DifferenceMatrix read_binary(std::istream& in);
  static DifferenceMatrix read_binary(const std::string& path);

 private:
  DifferenceMatrix() = default;
  double pair_distance(std::int32_t col_i, std::int32_t col_j) const;

  Storage storage_ = Storage::dense;
  std::int32_t m_ = 0;
  Matrix dense_;   // M x M when dense
  Matrix values_;  // K x M when on demand
};

double lookup_difference(const DifferenceMatrix& q, std::int32_t i, std::int32_t j);

// CSV: link_id,v1,v2,v3,z1,z2,z3,imp1,imp2,imp3
void write_histograms_csv(const std::vector<SpeedHistogram>& histograms, std::ostream& out);
void write_histograms_csv(const std::vector<SpeedHistogram>& histograms, const std::string& path);
std::vector<SpeedHistogram> read_histograms_csv(std::istream& in);
std::vector<SpeedHistogram> read_histograms_csv(const std::string& path);

}  // namespace rnml

#endif  // RNML_SIMILARITY_HPP
