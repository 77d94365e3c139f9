#include "rnml/similarity.hpp"

#include "rnml/datagen.hpp"

#include <fstream>
#include <sstream>

namespace rnml {

TimeBinSchedule::TimeBinSchedule(const std::array<int, 24>& hour_bins) : hour_bins_(hour_bins) {
  for (int h = 0; h < 24; ++h) {
    int b = hour_bins_[static_cast<std::size_t>(h)];
    if (b < 1) throw std::invalid_argument("TimeBinSchedule: bins are 1-based");
    k_ = std::max(k_, b);
  }
  std::vector<bool> seen(static_cast<std::size_t>(k_), false);
  for (int h = 0; h < 24; ++h) seen[static_cast<std::size_t>(hour_bins_[static_cast<std::size_t>(h)] - 1)] = true;
  for (bool s : seen) {
    if (!s) throw std::invalid_argument("TimeBinSchedule: every bin needs at least one hour");
  }
}

TimeBinSchedule TimeBinSchedule::default_k3() {
  std::array<int, 24> hours{};
  for (int h = 0; h < 24; ++h) {
    if (h >= 5 && h < 11) {
      hours[static_cast<std::size_t>(h)] = 1;  // morning peak
    } else if (h >= 16 && h < 22) {
      hours[static_cast<std::size_t>(h)] = 2;  // evening peak
    } else {
      hours[static_cast<std::size_t>(h)] = 3;  // off-peak
    }
  }
  return TimeBinSchedule(hours);
}

BinSpeedStats bin_average_speeds(const std::vector<Trip>& train, const TimeBinSchedule& schedule,
                                 std::int32_t m) {
  const int k = schedule.bins();
  std::vector<KahanSum> sums(static_cast<std::size_t>(k) * static_cast<std::size_t>(m));
  std::vector<std::int64_t> counts(sums.size(), 0);
  std::vector<KahanSum> global_sum(static_cast<std::size_t>(k));
  std::vector<std::int64_t> global_count(static_cast<std::size_t>(k), 0);

  for (const Trip& trip : train) {
    const int bin = schedule.bin_of(trip.depart_ts);
    for (std::size_t j = 0; j < trip.link_ids.size(); ++j) {
      const auto id = trip.link_ids[j];
      if (id < 1 || id > m) {
        throw data_error("bin_average_speeds: link id " + std::to_string(id) + " outside [1, " +
                         std::to_string(m) + "]");
      }
      const auto cell = static_cast<std::size_t>(bin - 1) * static_cast<std::size_t>(m) +
                        static_cast<std::size_t>(id - 1);
      sums[cell].add(trip.link_speeds_mps[j]);
      ++counts[cell];
      global_sum[static_cast<std::size_t>(bin - 1)].add(trip.link_speeds_mps[j]);
      ++global_count[static_cast<std::size_t>(bin - 1)];
    }
  }

  BinSpeedStats stats;
  stats.means.resize(k, m);
  stats.support.resize(k, m);
  stats.imputed.resize(k, m);
  stats.global_bin_mean.resize(static_cast<std::size_t>(k));
  for (int b = 0; b < k; ++b) {
    if (global_count[static_cast<std::size_t>(b)] == 0) {
      throw degenerate_data_error("bin_average_speeds: time bin " + std::to_string(b + 1) +
                                  " has no data in the whole training set");
    }
    stats.global_bin_mean[static_cast<std::size_t>(b)] =
        global_sum[static_cast<std::size_t>(b)].value() /
        static_cast<double>(global_count[static_cast<std::size_t>(b)]);
  }
  for (int b = 0; b < k; ++b) {
    for (std::int32_t l = 0; l < m; ++l) {
      const auto cell =
          static_cast<std::size_t>(b) * static_cast<std::size_t>(m) + static_cast<std::size_t>(l);
      stats.support(b, l) = counts[cell];
      if (counts[cell] == 0) {
        stats.means(b, l) = stats.global_bin_mean[static_cast<std::size_t>(b)];
        stats.imputed(b, l) = true;
      } else {
        stats.means(b, l) = sums[cell].value() / static_cast<double>(counts[cell]);
        stats.imputed(b, l) = false;
      }
    }
  }
  return stats;
}

std::vector<SpeedHistogram> normalize(const BinSpeedStats& stats) {
  const double a = stats.means.minCoeff();
  const double b = stats.means.maxCoeff();
  if (!(b > a)) {
    throw degenerate_data_error("normalize: all bin means equal; min-max scaling undefined");
  }
  std::vector<SpeedHistogram> histograms(static_cast<std::size_t>(stats.links()));
  for (std::int32_t l = 0; l < stats.links(); ++l) {
    SpeedHistogram& h = histograms[static_cast<std::size_t>(l)];
    h.link_id = l + 1;
    h.values.resize(static_cast<std::size_t>(stats.bins()));
    h.support.resize(static_cast<std::size_t>(stats.bins()));
    h.imputed.resize(static_cast<std::size_t>(stats.bins()));
    for (int k = 0; k < stats.bins(); ++k) {
      h.values[static_cast<std::size_t>(k)] = (stats.means(k, l) - a) / (b - a);
      h.support[static_cast<std::size_t>(k)] = stats.support(k, l);
      h.imputed[static_cast<std::size_t>(k)] = stats.imputed(k, l);
    }
  }
  return histograms;
}

double DifferenceMatrix::pair_distance(std::int32_t col_i, std::int32_t col_j) const {
  return (values_.col(col_i) - values_.col(col_j)).norm();
}

DifferenceMatrix DifferenceMatrix::build(const std::vector<SpeedHistogram>& histograms,
                                         Storage storage) {
  if (histograms.empty()) throw std::invalid_argument("DifferenceMatrix: no histograms");
  const auto k = histograms.front().values.size();
  DifferenceMatrix q;
  q.storage_ = storage;
  q.m_ = static_cast<std::int32_t>(histograms.size());
  q.values_.resize(static_cast<Eigen::Index>(k), q.m_);
  for (std::int32_t l = 0; l < q.m_; ++l) {
    const SpeedHistogram& h = histograms[static_cast<std::size_t>(l)];
    if (h.values.size() != k) throw std::invalid_argument("DifferenceMatrix: ragged histograms");
    if (h.link_id != l + 1) throw data_error("DifferenceMatrix: histograms not ordered by link id");
    for (std::size_t b = 0; b < k; ++b) {
      q.values_(static_cast<Eigen::Index>(b), l) = h.values[b];
    }
  }
  if (storage == Storage::dense) {
    q.dense_.setZero(q.m_, q.m_);
    for (std::int32_t i = 0; i < q.m_; ++i) {
      for (std::int32_t j = i + 1; j < q.m_; ++j) {
        const double d = q.pair_distance(i, j);
        q.dense_(i, j) = d;
        q.dense_(j, i) = d;
      }
    }
  }
  return q;
}

double DifferenceMatrix::lookup(std::int32_t i, std::int32_t j) const {
  if (i < 1 || i > m_ || j < 1 || j > m_) {
    throw std::invalid_argument("DifferenceMatrix::lookup: link id outside [1, " +
                                std::to_string(m_) + "]");
  }
  if (i == j) return 0.0;
  if (storage_ == Storage::dense) return dense_(i - 1, j - 1);
  return pair_distance(i - 1, j - 1);
}

double lookup_difference(const DifferenceMatrix& q, std::int32_t i, std::int32_t j) {
  return q.lookup(i, j);
}

namespace {
constexpr char kQMagic[8] = {'R', 'N', 'M', 'L', 'Q', 'M', 'A', 'T'};

template <typename T>
void write_raw(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw data_error("q matrix: truncated file");
  return v;
}
}  // namespace

void DifferenceMatrix::write_binary(std::ostream& out) const {
  out.write(kQMagic, sizeof(kQMagic));
  write_raw<std::uint32_t>(out, static_cast<std::uint32_t>(m_));
  write_raw<std::uint32_t>(out, 0);  // reserved
  for (std::int32_t i = 0; i < m_; ++i) {
    for (std::int32_t j = 0; j < m_; ++j) {
      // row-major little-endian f64; lookup is mode-agnostic
      const double d = i == j ? 0.0 : (storage_ == Storage::dense ? dense_(i, j) : pair_distance(i, j));
      write_raw<double>(out, d);
    }
  }
}

void DifferenceMatrix::write_binary(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error("cannot open " + path + " for writing");
  write_binary(out);
}

DifferenceMatrix DifferenceMatrix::read_binary(std::istream& in) {
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kQMagic, sizeof(kQMagic)) != 0) {
    throw data_error("q matrix: bad magic");
  }
  const auto m = static_cast<std::int32_t>(read_raw<std::uint32_t>(in));
  read_raw<std::uint32_t>(in);  // reserved
  DifferenceMatrix q;
  q.storage_ = Storage::dense;
  q.m_ = m;
  q.dense_.resize(m, m);
  for (std::int32_t i = 0; i < m; ++i) {
    for (std::int32_t j = 0; j < m; ++j) q.dense_(i, j) = read_raw<double>(in);
  }
  return q;
}

DifferenceMatrix DifferenceMatrix::read_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("cannot open " + path);
  return read_binary(in);
}

void write_histograms_csv(const std::vector<SpeedHistogram>& histograms, std::ostream& out) {
  out << "link_id,v1,v2,v3,z1,z2,z3,imp1,imp2,imp3\n";
  for (const SpeedHistogram& h : histograms) {
    if (h.values.size() != 3) throw std::invalid_argument("histogram csv expects K=3");
    out << h.link_id;
    for (double v : h.values) out << ',' << format_double(v);
    for (auto z : h.support) out << ',' << z;
    for (bool i : h.imputed) out << ',' << (i ? 1 : 0);
    out << '\n';
  }
}

void write_histograms_csv(const std::vector<SpeedHistogram>& histograms, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error("cannot open " + path + " for writing");
  write_histograms_csv(histograms, out);
}

std::vector<SpeedHistogram> read_histograms_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "link_id,v1,v2,v3,z1,z2,z3,imp1,imp2,imp3") {
    throw data_error("histogram csv: bad header");
  }
  std::vector<SpeedHistogram> histograms;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    auto next = [&] {
      if (!std::getline(ss, field, ',')) throw data_error("histogram csv: short row");
      return field;
    };
    SpeedHistogram h;
    h.link_id = static_cast<std::int32_t>(std::stol(next()));
    h.values.resize(3);
    h.support.resize(3);
    h.imputed.resize(3);
    for (auto& v : h.values) v = std::stod(next());
    for (auto& z : h.support) z = std::stoll(next());
    for (std::size_t i = 0; i < 3; ++i) h.imputed[i] = next() == "1";
    histograms.push_back(std::move(h));
  }
  return histograms;
}

std::vector<SpeedHistogram> read_histograms_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("cannot open " + path);
  return read_histograms_csv(in);
}

}  // namespace rnml
