#include "rnml/evaluator.hpp"

#include "json.hpp"

#include <fstream>

namespace rnml::eval {

Metrics metrics(const Vector& y, const Vector& pred) {
  if (y.size() == 0 || y.size() != pred.size()) {
    throw std::invalid_argument("metrics: empty input or size mismatch");
  }
  if ((y.array() <= 0.0).any()) throw std::invalid_argument("metrics: targets must be positive");
  const Vector err = (y - pred).cwiseAbs();
  Metrics m;
  m.mape = err.cwiseQuotient(y).mean();
  m.mae = err.mean();
  m.rmse = std::sqrt(err.squaredNorm() / static_cast<double>(err.size()));
  return m;
}

std::vector<std::size_t> stratify(const std::vector<Trip>& trips, const CoverageTable& coverage,
                                  double delta, double min_cold_fraction) {
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < trips.size(); ++i) {
    const auto& ids = trips[i].link_ids;
    std::size_t cold = 0;
    for (auto id : ids) {
      if (static_cast<double>(coverage.at(id)) < delta) ++cold;
    }
    if (static_cast<double>(cold) >= min_cold_fraction * static_cast<double>(ids.size())) {
      kept.push_back(i);
    }
  }
  return kept;
}

EvalReport sweep(const std::vector<Trip>& test, const CoverageTable& coverage,
                 const std::vector<double>& deltas,
                 const std::vector<std::pair<std::string, Vector>>& predictions) {
  Vector target(static_cast<Eigen::Index>(test.size()));
  for (std::size_t i = 0; i < test.size(); ++i) {
    target(static_cast<Eigen::Index>(i)) = test[i].travel_time_s;
  }

  EvalReport report;
  for (const auto& [variant, pred] : predictions) {
    if (pred.size() != target.size()) {
      throw std::invalid_argument("sweep: predictions for '" + variant + "' misaligned with test");
    }
    VariantReport vr;
    vr.variant = variant;

    Stratum overall;
    overall.n = test.size();
    if (!test.empty()) overall.values = metrics(target, pred);
    vr.strata.push_back(std::move(overall));

    for (double delta : deltas) {
      const auto kept = stratify(test, coverage, delta);
      Stratum s;
      s.delta = delta;
      s.n = kept.size();
      if (!kept.empty()) {
        Vector y(static_cast<Eigen::Index>(kept.size()));
        Vector p(static_cast<Eigen::Index>(kept.size()));
        for (std::size_t i = 0; i < kept.size(); ++i) {
          y(static_cast<Eigen::Index>(i)) = target(static_cast<Eigen::Index>(kept[i]));
          p(static_cast<Eigen::Index>(i)) = pred(static_cast<Eigen::Index>(kept[i]));
        }
        s.values = metrics(y, p);
      }
      vr.strata.push_back(std::move(s));
    }
    report.variants.push_back(std::move(vr));
  }
  return report;
}

void write_report_json(const EvalReport& report, const std::string& path) {
  nlohmann::json j;
  j["variants"] = nlohmann::json::array();
  for (const VariantReport& vr : report.variants) {
    nlohmann::json entry;
    entry["variant"] = vr.variant;
    entry["strata"] = nlohmann::json::array();
    for (const Stratum& s : vr.strata) {
      nlohmann::json row;
      if (s.delta) {
        row["delta"] = *s.delta;
      } else {
        row["delta"] = "overall";
      }
      row["n"] = s.n;
      if (s.values) {
        row["mape"] = s.values->mape;
        row["mae_s"] = s.values->mae;
        row["rmse_s"] = s.values->rmse;
      } else {
        row["mape"] = nullptr;
        row["mae_s"] = nullptr;
        row["rmse_s"] = nullptr;
      }
      entry["strata"].push_back(std::move(row));
    }
    j["variants"].push_back(std::move(entry));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error("cannot open " + path + " for writing");
  out << j.dump(2) << '\n';
}

void write_report_csv(const EvalReport& report, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error("cannot open " + path + " for writing");
  out << "variant,delta,n,mape,mae,rmse\n";
  for (const VariantReport& vr : report.variants) {
    for (const Stratum& s : vr.strata) {
      out << vr.variant << ',';
      if (s.delta) {
        out << format_double(*s.delta);
      } else {
        out << "overall";
      }
      out << ',' << s.n << ',';
      if (s.values) {
        out << format_double(s.values->mape) << ',' << format_double(s.values->mae) << ','
            << format_double(s.values->rmse);
      } else {
        out << ",,";
      }
      out << '\n';
    }
  }
}

}  // namespace rnml::eval
