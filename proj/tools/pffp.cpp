// Command-line surface for the sediment behavior classifier: preprocess raw
// penetrometer deployments, train the fused model, predict with uncertainty,
// and evaluate labeled sets.
//
// Exit codes: 0 success, 1 usage, 2 data error, 3 model error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "pffp/bundle.hpp"
#include "pffp/config.hpp"
#include "pffp/eval.hpp"
#include "pffp/pipeline.hpp"
#include "pffp/version.hpp"

namespace {

struct Options {
  int threads = 0;  // 0 = all cores

  std::string manifest, raw_dir, out;
  double impact_threshold_g = 1.0;
  int impact_hold = 10;

  std::string features, config_path, model;
  std::uint64_t seed = 0;

  std::string input, format = "json";
  int iterations = 0;  // 0 = bundle default

  std::string split = "test", out_dir = ".";
};

pffp::signal::ImpactConfig impact_config(const Options& opt) {
  pffp::signal::ImpactConfig config;
  config.threshold_g = opt.impact_threshold_g;
  config.hold = static_cast<std::size_t>(opt.impact_hold);
  return config;
}

int run_preprocess(const Options& opt) {
  const auto result = pffp::pipeline::preprocess(opt.manifest, opt.raw_dir, opt.out,
                                                 impact_config(opt), opt.threads);
  for (const auto& issue : result.warnings) {
    std::cerr << "warning: manifest row " << issue.row << ": " << issue.message << "\n";
  }
  for (const auto& issue : result.skipped) {
    std::cerr << "skipped: manifest row " << issue.row << ": " << issue.message << "\n";
  }
  std::cout << result.written << " deployments written to " << opt.out << " ("
            << result.skipped.size() << " skipped)\n";
  return 0;
}

int run_train(const Options& opt) {
  pffp::PipelineConfig config;
  if (!opt.config_path.empty()) config = pffp::load_config(opt.config_path);

  const auto rows = pffp::pipeline::read_features_csv(opt.features);
  std::cout << rows.size() << " feature rows loaded\n";

  const auto bundle = pffp::pipeline::train_pipeline(rows, config, opt.seed, opt.threads,
                                                     &std::cout);

  // Write complete-or-nothing: stage into a temp file, then rename.
  const std::string staging = opt.out + ".tmp";
  try {
    pffp::bundle::save_bundle(bundle, staging);
    std::filesystem::rename(staging, opt.out);
  } catch (...) {
    std::error_code ec;
    std::filesystem::remove(staging, ec);
    throw;
  }
  std::cout << "model bundle written to " << opt.out << "\n";
  return 0;
}

int run_predict(const Options& opt) {
  const auto bundle = pffp::bundle::load_bundle(opt.model);
  const auto record = pffp::signal::read_raw_csv(opt.input);

  std::optional<int> iterations;
  if (opt.iterations > 0) {
    if (opt.iterations < 30 || opt.iterations > 50) {
      std::cerr << "warning: " << opt.iterations
                << " iterations is outside the stable 30-50 range\n";
    }
    iterations = opt.iterations;
  }

  const auto prediction =
      pffp::pipeline::predict_record(bundle, record, iterations, opt.seed, impact_config(opt));

  std::ofstream file;
  std::ostream* out = &std::cout;
  if (!opt.out.empty()) {
    file.open(opt.out, std::ios::binary);
    if (!file) throw pffp::DataError("cannot write " + opt.out);
    out = &file;
  }
  if (opt.format == "json") {
    pffp::pipeline::write_prediction_json(*out, prediction, bundle.fusion_config);
  } else {
    pffp::pipeline::write_prediction_csv(*out, prediction);
  }
  return 0;
}

int run_evaluate(const Options& opt) {
  const auto bundle = pffp::bundle::load_bundle(opt.model);
  const auto rows = pffp::pipeline::read_features_csv(opt.features);
  const auto result =
      pffp::pipeline::evaluate_bundle(bundle, rows, opt.split == "test", opt.seed, opt.threads);

  std::filesystem::create_directories(opt.out_dir);
  pffp::eval::write_confusion_csv(result.matrix, opt.out_dir + "/confusion.csv");
  pffp::eval::write_report_json(result.matrix, result.accuracy, opt.out_dir + "/report.json");

  std::printf("evaluated %lld deployments (%s split)\n",
              static_cast<long long>(result.matrix.total()), opt.split.c_str());
  std::printf("accuracy: %.1f%%\n", 100.0 * result.accuracy);
  std::cout << "reports written to " << opt.out_dir << "/confusion.csv and report.json\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Probabilistic seabed sediment behavior classification from free-fall "
               "penetrometer records"};
  app.require_subcommand(1);
  Options opt;
  app.add_option("--threads", opt.threads, "worker threads (0 = all cores)");

  auto* preprocess =
      app.add_subcommand("preprocess", "Convert raw deployment records into the features file");
  preprocess->add_option("--manifest", opt.manifest, "deployment manifest csv")->required();
  preprocess->add_option("--raw-dir", opt.raw_dir, "directory holding the raw csv files");
  preprocess->add_option("--out", opt.out, "features csv to write")->required();
  preprocess->add_option("--impact-threshold", opt.impact_threshold_g,
                         "impact threshold above the free-fall baseline, in g");
  preprocess->add_option("--impact-hold", opt.impact_hold,
                         "samples that must stay above the threshold");

  auto* train = app.add_subcommand("train", "Train the forest prior and network likelihood");
  train->add_option("--features", opt.features, "features csv from preprocess")->required();
  train->add_option("--config", opt.config_path, "key=value config file");
  train->add_option("--seed", opt.seed, "master seed");
  train->add_option("--out", opt.out, "model bundle to write")->required();

  auto* predict = app.add_subcommand("predict", "Classify one raw deployment with uncertainty");
  predict->add_option("--model", opt.model, "model bundle")->required();
  predict->add_option("--input", opt.input, "raw deployment csv")->required();
  predict->add_option("--iterations", opt.iterations, "Monte-Carlo draws (default from bundle)");
  predict->add_option("--format", opt.format, "json or csv")
      ->check(CLI::IsMember({"json", "csv"}));
  predict->add_option("--seed", opt.seed, "sampling seed");
  predict->add_option("--out", opt.out, "report file (default stdout)");
  predict->add_option("--impact-threshold", opt.impact_threshold_g,
                      "impact threshold above the free-fall baseline, in g");
  predict->add_option("--impact-hold", opt.impact_hold,
                      "samples that must stay above the threshold");

  auto* evaluate = app.add_subcommand("evaluate", "Score a labeled features file");
  evaluate->add_option("--model", opt.model, "model bundle")->required();
  evaluate->add_option("--features", opt.features, "labeled features csv")->required();
  evaluate->add_option("--split", opt.split, "test = held-out rows only, all = every row")
      ->check(CLI::IsMember({"test", "all"}));
  evaluate->add_option("--out-dir", opt.out_dir, "directory for confusion.csv and report.json");
  evaluate->add_option("--seed", opt.seed, "sampling seed");

  auto* version = app.add_subcommand("version", "Print the tool version");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (preprocess->parsed()) return run_preprocess(opt);
    if (train->parsed()) return run_train(opt);
    if (predict->parsed()) return run_predict(opt);
    if (evaluate->parsed()) return run_evaluate(opt);
    if (version->parsed()) {
      std::printf("pffp %s (bundle format %d)\n", pffp::kVersionString,
                  pffp::bundle::kFormatVersion);
      return 0;
    }
  } catch (const pffp::ModelError& e) {
    std::cerr << "model error: " << e.what() << "\n";
    return 3;
  } catch (const pffp::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
