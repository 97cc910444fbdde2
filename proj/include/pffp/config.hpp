#pragma once
// Flat key=value pipeline configuration. Every tuning constant ships with its
// published default and can be overridden from a config file; unknown keys
// and malformed values are rejected by name.

#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "pffp/bnn.hpp"
#include "pffp/corpus.hpp"
#include "pffp/errors.hpp"
#include "pffp/forest.hpp"
#include "pffp/fusion.hpp"

namespace pffp {

struct PipelineConfig {
  // splitting
  double test_fraction = 0.15;
  double validation_fraction = 0.15;
  bool stratified = true;

  // oversampling for the network branch
  int adasyn_k = 5;
  double adasyn_beta = 1.0;

  // forest grid search
  int cv_folds = 5;
  std::vector<int> grid_trees = {100, 200, 500};
  std::vector<int> grid_max_depth = {0, 5, 10, 20};  // 0 = unbounded
  std::vector<int> grid_min_samples_split = {2, 5, 10};
  std::vector<int> grid_min_samples_leaf = {1, 2, 4};
  std::vector<bool> grid_bootstrap = {true, false};  // with / without replacement

  // network training
  double learning_rate = 1e-3;
  int max_epochs = 200;
  int patience = 20;
  int batch_size = 32;
  double prior_variance = 0.1;
  double init_sigma = 0.05;

  // fusion
  double prior_scale = 0.6;
  double prior_bias = 0.1;
  int iterations = 40;

  corpus::SplitSpec split_spec(std::uint64_t seed) const {
    corpus::SplitSpec spec;
    spec.test_fraction = test_fraction;
    spec.validation_fraction = validation_fraction;
    spec.stratified = stratified;
    spec.seed = seed;
    spec.validate();
    return spec;
  }

  bnn::TrainConfig train_config(std::uint64_t seed) const {
    bnn::TrainConfig cfg;
    cfg.learning_rate = learning_rate;
    cfg.max_epochs = max_epochs;
    cfg.patience = patience;
    cfg.batch_size = batch_size;
    cfg.prior_variance = prior_variance;
    cfg.init_sigma = init_sigma;
    cfg.seed = seed;
    cfg.validate();
    return cfg;
  }

  fusion::FusionConfig fusion_config() const {
    fusion::FusionConfig cfg;
    cfg.prior_scale = prior_scale;
    cfg.prior_bias = prior_bias;
    cfg.iterations = iterations;
    cfg.validate();
    return cfg;
  }

  std::vector<forest::HyperParams> build_grid(std::uint64_t seed) const {
    std::vector<forest::HyperParams> grid;
    std::size_t index = 0;
    for (const int trees : grid_trees) {
      for (const int depth : grid_max_depth) {
        for (const int min_split : grid_min_samples_split) {
          for (const int min_leaf : grid_min_samples_leaf) {
            if (min_leaf > min_split) continue;
            for (const bool replacement : grid_bootstrap) {
              forest::HyperParams hp;
              hp.n_trees = trees;
              hp.max_depth = depth;
              hp.min_samples_split = min_split;
              hp.min_samples_leaf = min_leaf;
              hp.bootstrap_replacement = replacement;
              hp.seed = mix_seed(seed, index++);
              hp.validate();
              grid.push_back(hp);
            }
          }
        }
      }
    }
    if (grid.empty()) throw GridEmpty();
    return grid;
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

inline double config_double(const std::string& key, const std::string& value) {
  try {
    return csv::parse_double(value, key);
  } catch (const DataError&) {
    throw DataError("config key '" + key + "': invalid number '" + value + "'");
  }
}

inline int config_int(const std::string& key, const std::string& value) {
  try {
    return static_cast<int>(csv::parse_long(value, key));
  } catch (const DataError&) {
    throw DataError("config key '" + key + "': invalid integer '" + value + "'");
  }
}

inline bool config_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw DataError("config key '" + key + "': expected true/false, got '" + value + "'");
}

inline std::vector<int> config_int_list(const std::string& key, const std::string& value) {
  std::vector<int> out;
  std::stringstream stream(value);
  std::string item;
  while (std::getline(stream, item, ',')) out.push_back(config_int(key, trim(item)));
  if (out.empty()) throw DataError("config key '" + key + "': empty list");
  return out;
}

inline std::vector<bool> config_bootstrap_list(const std::string& key, const std::string& value) {
  std::vector<bool> out;
  std::stringstream stream(value);
  std::string item;
  while (std::getline(stream, item, ',')) {
    const auto token = trim(item);
    if (token == "with") {
      out.push_back(true);
    } else if (token == "without") {
      out.push_back(false);
    } else {
      throw DataError("config key '" + key + "': expected with/without, got '" + token + "'");
    }
  }
  if (out.empty()) throw DataError("config key '" + key + "': empty list");
  return out;
}

}  // namespace detail

inline PipelineConfig parse_config(std::istream& in, const std::string& what) {
  PipelineConfig config;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto text = detail::trim(line);
    if (text.empty() || text[0] == '#') continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) {
      throw DataError(what + ":" + std::to_string(line_no) + ": expected key=value");
    }
    const auto key = detail::trim(text.substr(0, eq));
    const auto value = detail::trim(text.substr(eq + 1));
    using namespace detail;

    if (key == "test_fraction") config.test_fraction = config_double(key, value);
    else if (key == "validation_fraction") config.validation_fraction = config_double(key, value);
    else if (key == "stratified") config.stratified = config_bool(key, value);
    else if (key == "adasyn_k") config.adasyn_k = config_int(key, value);
    else if (key == "adasyn_beta") config.adasyn_beta = config_double(key, value);
    else if (key == "cv_folds") config.cv_folds = config_int(key, value);
    else if (key == "grid_trees") config.grid_trees = config_int_list(key, value);
    else if (key == "grid_max_depth") config.grid_max_depth = config_int_list(key, value);
    else if (key == "grid_min_samples_split") config.grid_min_samples_split = config_int_list(key, value);
    else if (key == "grid_min_samples_leaf") config.grid_min_samples_leaf = config_int_list(key, value);
    else if (key == "grid_bootstrap") config.grid_bootstrap = config_bootstrap_list(key, value);
    else if (key == "learning_rate") config.learning_rate = config_double(key, value);
    else if (key == "max_epochs") config.max_epochs = config_int(key, value);
    else if (key == "patience") config.patience = config_int(key, value);
    else if (key == "batch_size") config.batch_size = config_int(key, value);
    else if (key == "prior_variance") config.prior_variance = config_double(key, value);
    else if (key == "init_sigma") config.init_sigma = config_double(key, value);
    else if (key == "prior_scale") config.prior_scale = config_double(key, value);
    else if (key == "prior_bias") config.prior_bias = config_double(key, value);
    else if (key == "iterations") config.iterations = config_int(key, value);
    else throw DataError(what + ":" + std::to_string(line_no) + ": unknown config key '" + key + "'");
  }
  return config;
}

inline PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config " + path);
  return parse_config(in, path);
}

}  // namespace pffp
