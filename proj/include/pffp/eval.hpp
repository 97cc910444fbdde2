#pragma once
// Confusion matrices, accuracy, and report files (confusion.csv,
// report.json) with per-class precision and recall.

#include <array>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pffp/bnn.hpp"
#include "pffp/corpus.hpp"
#include "pffp/errors.hpp"
#include "pffp/forest.hpp"
#include "pffp/fusion.hpp"
#include "pffp/parallel.hpp"

namespace pffp::eval {

inline constexpr int kNumClasses = 4;

struct ConfusionMatrix {
  // counts[actual][predicted], class indices 0..3
  std::array<std::array<std::int64_t, kNumClasses>, kNumClasses> counts{};

  std::int64_t total() const {
    std::int64_t sum = 0;
    for (const auto& row : counts) {
      for (const auto c : row) sum += c;
    }
    return sum;
  }

  std::int64_t row_total(std::size_t actual) const {
    std::int64_t sum = 0;
    for (const auto c : counts[actual]) sum += c;
    return sum;
  }

  std::int64_t column_total(std::size_t predicted) const {
    std::int64_t sum = 0;
    for (const auto& row : counts) sum += row[predicted];
    return sum;
  }

  // Rows of percentages; empty actual classes render as zero rows.
  std::array<std::array<double, kNumClasses>, kNumClasses> row_percent() const {
    std::array<std::array<double, kNumClasses>, kNumClasses> out{};
    for (std::size_t a = 0; a < kNumClasses; ++a) {
      const auto denom = row_total(a);
      if (denom == 0) continue;
      for (std::size_t p = 0; p < kNumClasses; ++p) {
        out[a][p] = 100.0 * static_cast<double>(counts[a][p]) / static_cast<double>(denom);
      }
    }
    return out;
  }

  double accuracy() const {
    const auto n = total();
    if (n == 0) throw EmptySet();
    std::int64_t trace = 0;
    for (std::size_t c = 0; c < kNumClasses; ++c) trace += counts[c][c];
    return static_cast<double>(trace) / static_cast<double>(n);
  }
};

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  std::int64_t support = 0;  // actual rows of this class
};

inline std::array<ClassMetrics, kNumClasses> per_class_metrics(const ConfusionMatrix& matrix) {
  std::array<ClassMetrics, kNumClasses> out{};
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    const auto col = matrix.column_total(c);
    const auto row = matrix.row_total(c);
    out[c].support = row;
    out[c].precision = col > 0 ? static_cast<double>(matrix.counts[c][c]) / static_cast<double>(col) : 0.0;
    out[c].recall = row > 0 ? static_cast<double>(matrix.counts[c][c]) / static_cast<double>(row) : 0.0;
  }
  return out;
}

struct EvalResult {
  ConfusionMatrix matrix;
  double accuracy = 0.0;
};

// Classifies every deployment through the fused model. Rows arrive unscaled;
// each one gets an independent generator derived from the seed, so the result
// does not depend on row evaluation order or thread count.
inline EvalResult evaluate(const forest::ForestModel& prior_model,
                           const bnn::VariationalNetwork& network,
                           const corpus::ScalerParams& scaler,
                           const std::vector<corpus::LabeledDeployment>& rows,
                           const fusion::FusionConfig& config, std::uint64_t seed,
                           int threads = 1) {
  if (rows.empty()) throw EmptySet();

  std::vector<int> predicted(rows.size(), -1);
  parallel_for(rows.size(), threads, [&](std::size_t i) {
    const auto scaled = corpus::apply_scaler(scaler, rows[i]);
    const std::array<double, 2> summary = {scaled.summary.normalized_max_decel_per_s,
                                           scaled.summary.penetration_depth_m};
    Rng rng(mix_seed(seed, i));
    const auto estimate = fusion::predict_with_uncertainty(
        prior_model, network, summary,
        std::span<const double>(scaled.features.bins.data(), scaled.features.bins.size()), config,
        rng);
    predicted[i] = estimate.predicted.index();
  });

  EvalResult result;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto actual = static_cast<std::size_t>(rows[i].label.index());
    result.matrix.counts[actual][static_cast<std::size_t>(predicted[i])] += 1;
  }
  result.accuracy = result.matrix.accuracy();
  return result;
}

// confusion.csv: one row per actual class; counts then row percentages.
inline void write_confusion_csv(const ConfusionMatrix& matrix, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << "actual_class,pred_1,pred_2,pred_3,pred_4,pct_1,pct_2,pct_3,pct_4\n";
  const auto pct = matrix.row_percent();
  for (std::size_t a = 0; a < kNumClasses; ++a) {
    out << (a + 1);
    for (std::size_t p = 0; p < kNumClasses; ++p) out << ',' << matrix.counts[a][p];
    for (std::size_t p = 0; p < kNumClasses; ++p) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.2f", pct[a][p]);
      out << ',' << buf;
    }
    out << '\n';
  }
  for (std::size_t a = 0; a < kNumClasses; ++a) {
    if (matrix.row_total(a) == 0) {
      out << "# class " << (a + 1) << ": no samples in the evaluated set\n";
    }
  }
  if (!out) throw DataError("failed writing " + path);
}

inline void write_report_json(const ConfusionMatrix& matrix, double accuracy,
                              const std::string& path) {
  nlohmann::json doc;
  doc["accuracy"] = accuracy;
  doc["total"] = matrix.total();
  for (std::size_t a = 0; a < kNumClasses; ++a) {
    doc["counts"].push_back(matrix.counts[a]);
    doc["row_percent"].push_back(matrix.row_percent()[a]);
  }
  const auto metrics = per_class_metrics(matrix);
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    doc["per_class"].push_back({{"class", c + 1},
                                {"precision", metrics[c].precision},
                                {"recall", metrics[c].recall},
                                {"support", metrics[c].support}});
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << doc.dump(2) << '\n';
  if (!out) throw DataError("failed writing " + path);
}

struct LoadedReport {
  ConfusionMatrix matrix;
  double accuracy = 0.0;
};

// Reads report.json back and re-verifies the count bookkeeping.
inline LoadedReport read_report_json(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": invalid report json: " + e.what());
  }

  LoadedReport report;
  report.accuracy = doc.at("accuracy").get<double>();
  const auto& counts = doc.at("counts");
  if (counts.size() != kNumClasses) throw DataError(path + ": malformed counts");
  for (std::size_t a = 0; a < kNumClasses; ++a) {
    for (std::size_t p = 0; p < kNumClasses; ++p) {
      report.matrix.counts[a][p] = counts.at(a).at(p).get<std::int64_t>();
    }
  }
  if (report.matrix.total() != doc.at("total").get<std::int64_t>()) {
    throw DataError(path + ": count sum disagrees with recorded total");
  }
  return report;
}

}  // namespace pffp::eval
