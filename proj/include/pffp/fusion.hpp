#pragma once
// Bayesian combination of the forest prior with the network likelihood.
// The raw prior is tempered (scaled to 0-0.6, bias 0.1 added) so no class
// ever carries zero prior mass, then multiplied with each Monte-Carlo
// likelihood draw and renormalized. Per-class quartiles of the fused samples
// carry the uncertainty; the class with the highest median wins.

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <vector>

#include "pffp/bnn.hpp"
#include "pffp/corpus.hpp"
#include "pffp/errors.hpp"
#include "pffp/forest.hpp"
#include "pffp/rng.hpp"

namespace pffp::fusion {

inline constexpr int kNumClasses = 4;

struct FusionConfig {
  double prior_scale = 0.6;
  double prior_bias = 0.1;
  int iterations = 40;  // Monte-Carlo draws; 30-50 gives stable bounds

  void validate() const {
    if (!(prior_bias > 0.0 && prior_bias < 0.25)) {
      throw DataError("prior bias must lie in (0, 0.25)");
    }
    if (std::abs(prior_scale - (1.0 - 4.0 * prior_bias)) > 1e-12) {
      throw DataError("prior scale must equal 1 - 4 * bias");
    }
    if (iterations < 1) throw DataError("iterations must be positive");
  }
};

// scale * p + bias per component; keeps the vector normalized and strictly
// positive, and preserves the ranking of the input.
inline std::array<double, kNumClasses> temper_prior(const std::array<double, kNumClasses>& p,
                                                    const FusionConfig& config = {}) {
  config.validate();
  double sum = 0.0;
  for (const auto v : p) {
    if (!(v >= -1e-9) || !std::isfinite(v)) throw NotAProbabilityVector();
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-6) throw NotAProbabilityVector();

  std::array<double, kNumClasses> out{};
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    out[c] = config.prior_scale * p[c] + config.prior_bias;
  }
  return out;
}

// Elementwise product, renormalized to sum 1.
inline std::array<double, kNumClasses> fuse(const std::array<double, kNumClasses>& tempered_prior,
                                            const std::array<double, kNumClasses>& likelihood) {
  std::array<double, kNumClasses> out{};
  double sum = 0.0;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    out[c] = tempered_prior[c] * likelihood[c];
    sum += out[c];
  }
  if (!(sum > 0.0) || !std::isfinite(sum)) throw DegenerateProduct();
  for (auto& v : out) v /= sum;
  return out;
}

// Linear interpolation between order statistics (position q * (n - 1)).
inline double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw DataError("quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  if (lo + 1 >= values.size()) return values.back();
  const double frac = pos - std::floor(pos);
  return values[lo] + frac * (values[lo + 1] - values[lo]);
}

struct UncertaintyEstimate {
  std::vector<std::array<double, kNumClasses>> samples;  // fused posteriors
  std::array<double, kNumClasses> q1{}, q2{}, q3{};
  corpus::SedimentClass predicted;
  std::array<double, kNumClasses> prior{};           // raw forest output
  std::array<double, kNumClasses> tempered_prior{};
};

// Highest median probability; ties go to the lowest class label.
inline corpus::SedimentClass classify(const UncertaintyEstimate& estimate) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < kNumClasses; ++c) {
    if (estimate.q2[c] > estimate.q2[best]) best = c;
  }
  return corpus::SedimentClass::from_index(static_cast<int>(best));
}

// One tempered prior, n likelihood draws, n fused posteriors, and per-class
// quartiles of the fused samples.
inline UncertaintyEstimate predict_with_uncertainty(const forest::ForestModel& prior_model,
                                                    const bnn::VariationalNetwork& network,
                                                    const std::array<double, 2>& scaled_summary,
                                                    std::span<const double> scaled_bins,
                                                    const FusionConfig& config, Rng& rng) {
  config.validate();

  UncertaintyEstimate estimate;
  estimate.prior = forest::predict_proba(prior_model, scaled_summary);
  estimate.tempered_prior = temper_prior(estimate.prior, config);

  const auto draws = bnn::predict_mc(network, scaled_bins, config.iterations, rng);
  estimate.samples.reserve(draws.size());
  for (const auto& likelihood : draws) {
    estimate.samples.push_back(fuse(estimate.tempered_prior, likelihood));
  }

  std::vector<double> column(estimate.samples.size());
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    for (std::size_t i = 0; i < estimate.samples.size(); ++i) column[i] = estimate.samples[i][c];
    estimate.q1[c] = quantile(column, 0.25);
    estimate.q2[c] = quantile(column, 0.50);
    estimate.q3[c] = quantile(column, 0.75);
  }
  estimate.predicted = classify(estimate);
  return estimate;
}

}  // namespace pffp::fusion
