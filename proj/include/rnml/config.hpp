#ifndef RNML_CONFIG_HPP
#define RNML_CONFIG_HPP

#include "rnml/trainer.hpp"

#include <map>
#include <string>
#include <vector>

namespace rnml {

// Flat `key = value` file; '#' starts a comment. Documented keys live under
// train.*, aux.*, model.* and data.*.
class KvConfig {
 public:
  KvConfig() = default;
  static KvConfig load(const std::string& path);
  static KvConfig parse(const std::string& text);

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  std::vector<double> get_doubles(const std::string& key, std::vector<double> fallback) const;

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

// Applies train.*, aux.* and model.* keys on top of the given defaults.
trainer::TrainConfig train_config_from(const KvConfig& config, trainer::TrainConfig defaults = {});

}  // namespace rnml

#endif  // RNML_CONFIG_HPP
