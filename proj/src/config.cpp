#include "rnml/config.hpp"

#include <fstream>
#include <sstream>

namespace rnml {

namespace {
std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return {};
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}
}  // namespace

KvConfig KvConfig::parse(const std::string& text) {
  KvConfig config;
  std::stringstream ss(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw data_error("config line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw data_error("config line " + std::to_string(lineno) + ": empty key");
    config.values_[key] = value;
  }
  return config;
}

KvConfig KvConfig::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("cannot open config " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse(buffer.str());
}

std::string KvConfig::get_string(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double KvConfig::get_double(const std::string& key, double fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    return std::stod(it->second);
  } catch (const std::exception&) {
    throw data_error("config key '" + key + "': not a number: " + it->second);
  }
}

std::int64_t KvConfig::get_int(const std::string& key, std::int64_t fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    return std::stoll(it->second);
  } catch (const std::exception&) {
    throw data_error("config key '" + key + "': not an integer: " + it->second);
  }
}

std::vector<double> KvConfig::get_doubles(const std::string& key,
                                          std::vector<double> fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::string body = it->second;  // bracketed form allowed: [a, b, c]
  if (!body.empty() && body.front() == '[' && body.back() == ']') {
    body = body.substr(1, body.size() - 2);
  }
  std::vector<double> out;
  std::stringstream ss(body);
  std::string field;
  while (std::getline(ss, field, ',')) {
    field = trim(field);
    if (field.empty()) continue;
    try {
      out.push_back(std::stod(field));
    } catch (const std::exception&) {
      throw data_error("config key '" + key + "': not a number list: " + it->second);
    }
  }
  return out;
}

trainer::TrainConfig train_config_from(const KvConfig& config, trainer::TrainConfig defaults) {
  trainer::TrainConfig c = defaults;
  c.batch_size = static_cast<int>(config.get_int("train.batch_size", c.batch_size));
  c.lr = config.get_double("train.lr", c.lr);
  c.max_steps = config.get_int("train.max_steps", c.max_steps);
  c.seed = static_cast<std::uint64_t>(config.get_int("train.seed", static_cast<std::int64_t>(c.seed)));
  c.eval_every = config.get_int("train.eval_every", c.eval_every);
  c.patience = static_cast<int>(config.get_int("train.patience", c.patience));
  c.clip_norm = config.get_double("train.clip_norm", c.clip_norm);
  c.log_every = config.get_int("train.log_every", c.log_every);
  c.variant = wdr::variant_from_name(config.get_string("model.variant", wdr::variant_name(c.variant)));
  c.hidden = config.get_int("model.hidden", c.hidden);
  c.link_emb_dim = config.get_int("model.link_emb_dim", c.link_emb_dim);
  c.beta = config.get_double("aux.beta", c.beta);

  auto margins = config.get_doubles("aux.margins", {c.aux.margins[0], c.aux.margins[1], c.aux.margins[2]});
  auto gammas = config.get_doubles("aux.gammas", {c.aux.gammas[0], c.aux.gammas[1], c.aux.gammas[2]});
  if (margins.size() != 3 || gammas.size() != 3) {
    throw data_error("config: aux.margins and aux.gammas need exactly 3 values");
  }
  for (int i = 0; i < 3; ++i) {
    if (margins[static_cast<std::size_t>(i)] < 0 || gammas[static_cast<std::size_t>(i)] < 0) {
      throw data_error("config: margins and gammas must be non-negative");
    }
    c.aux.margins[static_cast<std::size_t>(i)] = margins[static_cast<std::size_t>(i)];
    c.aux.gammas[static_cast<std::size_t>(i)] = gammas[static_cast<std::size_t>(i)];
  }
  c.aux.triangles_per_batch =
      static_cast<int>(config.get_int("aux.triangles_per_batch", c.aux.triangles_per_batch));
  return c;
}

}  // namespace rnml
