#ifndef RNML_EVALUATOR_HPP
#define RNML_EVALUATOR_HPP

#include "rnml/core.hpp"
#include "rnml/datagen.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace rnml::eval {

struct Metrics {
  double mape = 0.0;
  double mae = 0.0;
  double rmse = 0.0;
};

// y must be positive and nonempty; pred the same length.
Metrics metrics(const Vector& y, const Vector& pred);

// Keep a trip iff at least 25% of its link positions have training coverage
// below delta (a repeated cold link counts once per position). Returns kept
// indices in order.
std::vector<std::size_t> stratify(const std::vector<Trip>& trips, const CoverageTable& coverage,
                                  double delta, double min_cold_fraction = 0.25);

struct Stratum {
  std::optional<double> delta;  // nullopt = the overall row
  std::size_t n = 0;
  std::optional<Metrics> values;  // absent for empty strata
};

struct VariantReport {
  std::string variant;
  std::vector<Stratum> strata;  // overall first, then one per delta
};

struct EvalReport {
  std::vector<VariantReport> variants;
};

// Metrics per (variant, delta) plus overall. Predictions are per variant,
// aligned with `test`.
EvalReport sweep(const std::vector<Trip>& test, const CoverageTable& coverage,
                 const std::vector<double>& deltas,
                 const std::vector<std::pair<std::string, Vector>>& predictions);

void write_report_json(const EvalReport& report, const std::string& path);
// CSV schema: variant,delta,n,mape,mae,rmse; delta is "overall" on the overall
// row; metric fields are empty for empty strata.
void write_report_csv(const EvalReport& report, const std::string& path);

}  // namespace rnml::eval

#endif  // RNML_EVALUATOR_HPP
