#pragma once
// End-to-end orchestration behind the CLI commands: preprocess a manifest
// into the features file, train both models into a bundle, predict with
// uncertainty on a raw record, and evaluate labeled sets. Everything is
// deterministic given (inputs, config, seed); all randomness flows from
// per-stage streams derived from the master seed.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pffp/bundle.hpp"
#include "pffp/config.hpp"
#include "pffp/corpus.hpp"
#include "pffp/eval.hpp"
#include "pffp/signal.hpp"

namespace pffp::pipeline {

// Seed streams per pipeline stage.
namespace streams {
inline constexpr std::uint64_t kSplit = 1;
inline constexpr std::uint64_t kGridSearch = 2;
inline constexpr std::uint64_t kAdasyn = 3;
inline constexpr std::uint64_t kNetworkInit = 4;
inline constexpr std::uint64_t kNetworkTrain = 5;
inline constexpr std::uint64_t kOversample = 6;
inline constexpr std::uint64_t kValidationEval = 7;
}  // namespace streams

// --- features file ---

inline std::vector<std::string> features_header() {
  std::vector<std::string> header = {"deployment_id", "norm_max_decel", "depth_m"};
  for (int k = 0; k < static_cast<int>(signal::kFeatureBins); ++k) {
    char name[16];
    std::snprintf(name, sizeof(name), "bin_%03d", k);
    header.emplace_back(name);
  }
  header.emplace_back("class_label");
  return header;
}

inline void write_features_csv(const std::string& path,
                               const std::vector<corpus::LabeledDeployment>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  const auto header = features_header();
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (i) out << ',';
    out << header[i];
  }
  out << '\n';
  for (const auto& row : rows) {
    out << row.deployment_id << ',' << csv::format_double(row.summary.normalized_max_decel_per_s)
        << ',' << csv::format_double(row.summary.penetration_depth_m);
    for (const auto bin : row.features.bins) out << ',' << csv::format_double(bin);
    out << ',' << row.label.label() << '\n';
  }
  if (!out) throw DataError("failed writing " + path);
}

inline std::vector<corpus::LabeledDeployment> read_features_csv(const std::string& path) {
  const auto table = csv::read_file(path);
  const auto header = features_header();
  csv::require_header(table, header, path);
  if (table.rows.empty()) throw DataError(path + ": no feature rows");

  std::vector<corpus::LabeledDeployment> rows;
  rows.reserve(table.rows.size());
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& fields = table.rows[i];
    if (fields.size() != header.size()) {
      throw DataError(path + ": row " + std::to_string(i + 1) + " has wrong field count");
    }
    corpus::LabeledDeployment row;
    row.deployment_id = fields[0];
    row.summary.normalized_max_decel_per_s = csv::parse_double(fields[1], "norm_max_decel");
    row.summary.penetration_depth_m = csv::parse_double(fields[2], "depth_m");
    for (std::size_t k = 0; k < signal::kFeatureBins; ++k) {
      row.features.bins[k] = csv::parse_double(fields[3 + k], "bin value");
    }
    row.features.valid_bins = std::clamp(
        static_cast<int>(std::ceil(row.summary.penetration_depth_m / signal::kBinWidthM - 1e-9)), 0,
        static_cast<int>(signal::kFeatureBins));
    row.label =
        corpus::SedimentClass::from_label(static_cast<int>(csv::parse_long(fields.back(), "class_label")));
    rows.push_back(std::move(row));
  }
  return rows;
}

// --- preprocess ---

struct PreprocessResult {
  std::size_t written = 0;
  std::vector<corpus::RowIssue> skipped;
  std::vector<corpus::RowIssue> warnings;
};

inline PreprocessResult preprocess(const std::string& manifest_path, const std::string& raw_dir,
                                   const std::string& out_path,
                                   const signal::ImpactConfig& impact = {}, int threads = 1) {
  const auto loaded = corpus::load_corpus(manifest_path, raw_dir, impact, threads);
  write_features_csv(out_path, loaded.deployments);
  return {loaded.deployments.size(), loaded.skipped, loaded.warnings};
}

// --- train ---

inline std::array<double, 2> summary_point(const corpus::LabeledDeployment& row) {
  return {row.summary.normalized_max_decel_per_s, row.summary.penetration_depth_m};
}

inline bnn::Example to_example(const corpus::LabeledDeployment& row) {
  bnn::Example e;
  e.x = row.features.bins;
  e.class_index = row.label.index();
  return e;
}

// Full training pipeline: split, scale on train only, plain oversampling into
// the forest grid search, ADASYN into the network, plus validation metrics.
inline bundle::ModelBundle train_pipeline(const std::vector<corpus::LabeledDeployment>& rows,
                                          const PipelineConfig& config, std::uint64_t seed,
                                          int threads = 1, std::ostream* log = nullptr) {
  const auto split_spec = config.split_spec(mix_seed(seed, streams::kSplit));
  const auto split = corpus::split(rows, split_spec);
  const auto scaler = corpus::fit_scaler(split.train);
  const auto scaled_train = corpus::apply_scaler(scaler, split.train);
  const auto scaled_validation = corpus::apply_scaler(scaler, split.validation);

  // Prior branch: two summary features, plain duplication balancing.
  const auto balanced =
      corpus::random_oversample(scaled_train, mix_seed(seed, streams::kOversample));
  std::vector<forest::DataPoint> points;
  points.reserve(balanced.size());
  for (const auto& row : balanced) {
    points.push_back({summary_point(row), row.label.index()});
  }
  const auto grid = config.build_grid(mix_seed(seed, streams::kGridSearch));
  if (log) {
    *log << "grid search: " << grid.size() << " points x " << config.cv_folds << " folds on "
         << points.size() << " rows\n";
  }
  auto search = forest::grid_search_cv(points, grid, config.cv_folds,
                                       mix_seed(seed, streams::kGridSearch), threads);

  std::size_t forest_val_hits = 0;
  for (const auto& row : scaled_validation) {
    if (forest::predict_class_index(search.model, summary_point(row)) == row.label.index()) {
      ++forest_val_hits;
    }
  }
  const double forest_val_acc = scaled_validation.empty()
                                    ? 0.0
                                    : static_cast<double>(forest_val_hits) /
                                          static_cast<double>(scaled_validation.size());

  // Likelihood branch: ADASYN in the scaled 211-bin space.
  corpus::AdasynConfig adasyn_config;
  adasyn_config.k = config.adasyn_k;
  adasyn_config.beta = config.adasyn_beta;
  adasyn_config.seed = mix_seed(seed, streams::kAdasyn);
  const auto adasyn_train = corpus::adasyn(scaled_train, adasyn_config);

  std::vector<bnn::Example> train_examples, val_examples;
  train_examples.reserve(adasyn_train.size());
  for (const auto& row : adasyn_train) train_examples.push_back(to_example(row));
  for (const auto& row : scaled_validation) val_examples.push_back(to_example(row));

  auto network = bnn::init_network(bnn::NetworkArch{}, mix_seed(seed, streams::kNetworkInit),
                                   config.init_sigma);
  const auto train_cfg = config.train_config(mix_seed(seed, streams::kNetworkTrain));
  if (log) {
    *log << "network training: " << train_examples.size() << " rows (" << adasyn_train.size() -
            scaled_train.size() << " synthetic), " << val_examples.size() << " validation rows\n";
  }
  const auto trained = bnn::train(network, train_examples, val_examples, train_cfg);

  bundle::ModelBundle result;
  result.scaler = scaler;
  result.forest_model = std::move(search.model);
  result.network = std::move(network);
  result.fusion_config = config.fusion_config();

  auto& prov = result.provenance;
  prov.master_seed = seed;
  prov.split = split_spec;
  prov.grid_winner = search.best;
  for (const auto& score : search.table) {
    if (score.params.seed == search.best.seed) prov.grid_cv_accuracy = score.mean_accuracy;
  }
  prov.forest_validation_accuracy = forest_val_acc;
  prov.network_validation_loss =
      trained.best_epoch >= 0 ? trained.history[static_cast<std::size_t>(trained.best_epoch)].val_loss
                              : 0.0;
  prov.epochs_run = static_cast<int>(trained.history.size());
  prov.best_epoch = trained.best_epoch;
  prov.train_rows = static_cast<std::int64_t>(split.train.size());
  prov.validation_rows = static_cast<std::int64_t>(split.validation.size());
  prov.test_rows = static_cast<std::int64_t>(split.test.size());

  if (!split.validation.empty()) {
    const auto fused = eval::evaluate(result.forest_model, result.network, result.scaler,
                                      split.validation, result.fusion_config,
                                      mix_seed(seed, streams::kValidationEval), threads);
    prov.fused_validation_accuracy = fused.accuracy;
  }

  if (log) {
    *log << "forest: cv accuracy " << prov.grid_cv_accuracy << ", validation accuracy "
         << forest_val_acc << "\n"
         << "network: " << prov.epochs_run << " epochs, best validation loss "
         << prov.network_validation_loss << "\n"
         << "fused validation accuracy: " << prov.fused_validation_accuracy << "\n";
  }
  return result;
}

// --- predict ---

struct Prediction {
  std::string deployment_id;
  fusion::UncertaintyEstimate estimate;
  signal::SummaryFeatures summary;  // unscaled
  int iterations = 0;
  std::uint64_t seed = 0;
};

inline Prediction predict_features(const bundle::ModelBundle& bundle,
                                   const corpus::LabeledDeployment& row,
                                   std::optional<int> iterations, std::uint64_t seed) {
  auto config = bundle.fusion_config;
  if (iterations) config.iterations = *iterations;
  config.validate();

  const auto scaled = corpus::apply_scaler(bundle.scaler, row);
  Rng rng(seed);
  Prediction prediction;
  prediction.deployment_id = row.deployment_id;
  prediction.summary = row.summary;
  prediction.iterations = config.iterations;
  prediction.seed = seed;
  prediction.estimate = fusion::predict_with_uncertainty(
      bundle.forest_model, bundle.network,
      {scaled.summary.normalized_max_decel_per_s, scaled.summary.penetration_depth_m},
      std::span<const double>(scaled.features.bins.data(), scaled.features.bins.size()), config,
      rng);
  return prediction;
}

inline Prediction predict_record(const bundle::ModelBundle& bundle, const signal::RawRecord& record,
                                 std::optional<int> iterations, std::uint64_t seed,
                                 const signal::ImpactConfig& impact = {}) {
  const auto impact_index = signal::detect_impact(record, impact);
  const auto profile = signal::integrate_profile(record, impact_index);

  corpus::LabeledDeployment row;
  row.deployment_id = record.deployment_id;
  row.summary = signal::summary_features(profile);
  row.features = signal::bin_by_depth(signal::normalize(profile));
  return predict_features(bundle, row, iterations, seed);
}

inline nlohmann::json prediction_to_json(const Prediction& prediction,
                                         const fusion::FusionConfig& config) {
  nlohmann::json doc;
  doc["deployment_id"] = prediction.deployment_id;
  doc["predicted_class"] = prediction.estimate.predicted.label();
  doc["iterations"] = prediction.iterations;
  doc["seed"] = prediction.seed;
  doc["config"] = {{"prior_scale", config.prior_scale}, {"prior_bias", config.prior_bias}};
  doc["summary"] = {{"norm_max_decel", prediction.summary.normalized_max_decel_per_s},
                    {"depth_m", prediction.summary.penetration_depth_m}};
  doc["prior"] = prediction.estimate.prior;
  doc["tempered_prior"] = prediction.estimate.tempered_prior;
  for (std::size_t c = 0; c < 4; ++c) {
    nlohmann::json cls;
    cls["class"] = c + 1;
    cls["q1"] = prediction.estimate.q1[c];
    cls["q2"] = prediction.estimate.q2[c];
    cls["q3"] = prediction.estimate.q3[c];
    nlohmann::json samples = nlohmann::json::array();
    for (const auto& sample : prediction.estimate.samples) samples.push_back(sample[c]);
    cls["samples"] = std::move(samples);
    doc["classes"].push_back(std::move(cls));
  }
  return doc;
}

inline void write_prediction_json(std::ostream& out, const Prediction& prediction,
                                  const fusion::FusionConfig& config) {
  out << prediction_to_json(prediction, config).dump(2) << '\n';
}

inline void write_prediction_csv(std::ostream& out, const Prediction& prediction) {
  out << "class,q1,q2,q3,prior,tempered_prior,predicted\n";
  for (std::size_t c = 0; c < 4; ++c) {
    out << (c + 1) << ',' << csv::format_double(prediction.estimate.q1[c]) << ','
        << csv::format_double(prediction.estimate.q2[c]) << ','
        << csv::format_double(prediction.estimate.q3[c]) << ','
        << csv::format_double(prediction.estimate.prior[c]) << ','
        << csv::format_double(prediction.estimate.tempered_prior[c]) << ','
        << (prediction.estimate.predicted.index() == static_cast<int>(c) ? 1 : 0) << '\n';
  }
}

// --- evaluate ---

// Re-derives the training split from the bundle provenance so `test_only`
// scores exactly the held-out rows.
inline eval::EvalResult evaluate_bundle(const bundle::ModelBundle& bundle,
                                        const std::vector<corpus::LabeledDeployment>& rows,
                                        bool test_only, std::uint64_t seed, int threads = 1) {
  if (!test_only) {
    return eval::evaluate(bundle.forest_model, bundle.network, bundle.scaler, rows,
                          bundle.fusion_config, seed, threads);
  }
  if (!bundle.provenance.split) {
    throw SplitMismatch();
  }
  const auto recorded = bundle.provenance.train_rows + bundle.provenance.validation_rows +
                        bundle.provenance.test_rows;
  if (recorded != static_cast<std::int64_t>(rows.size())) {
    throw SplitMismatch("features file has " + std::to_string(rows.size()) +
                        " rows but the bundle was trained on " + std::to_string(recorded) +
                        "; the held-out split cannot be reproduced");
  }
  const auto split = corpus::split(rows, *bundle.provenance.split);
  return eval::evaluate(bundle.forest_model, bundle.network, bundle.scaler, split.test,
                        bundle.fusion_config, seed, threads);
}

}  // namespace pffp::pipeline
