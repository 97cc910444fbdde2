#pragma once
// Labeled training corpus: behavior-class assignment from gradation and
// plasticity criteria, manifest ingestion, stratified splitting, z-score
// scaling, and the two oversampling schemes (plain duplication for the
// two-feature prior, ADASYN for the 211-bin network input).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pffp/csv.hpp"
#include "pffp/errors.hpp"
#include "pffp/parallel.hpp"
#include "pffp/rng.hpp"
#include "pffp/signal.hpp"

namespace pffp::corpus {

inline constexpr int kNumClasses = 4;

// Behavior classes 1-4. 1/2 = cohesionless (sand content > 50%), split at 12%
// fines; 3/4 = cohesive (fines content > 50%), split at liquid limit 50.
class SedimentClass {
 public:
  SedimentClass() = default;

  static SedimentClass from_label(int label) {
    if (label < 1 || label > kNumClasses) {
      throw DataError("class label " + std::to_string(label) + " outside 1-4");
    }
    return SedimentClass(label);
  }
  static SedimentClass from_index(int index) { return from_label(index + 1); }

  int label() const { return label_; }
  int index() const { return label_ - 1; }

  std::string_view description() const {
    switch (label_) {
      case 1: return "cohesionless, little to no plasticity";
      case 2: return "cohesionless, some plasticity";
      case 3: return "cohesive, low plasticity";
      case 4: return "cohesive, high plasticity";
      default: return "unset";
    }
  }

  friend bool operator==(SedimentClass a, SedimentClass b) { return a.label_ == b.label_; }
  friend bool operator!=(SedimentClass a, SedimentClass b) { return a.label_ != b.label_; }

 private:
  explicit SedimentClass(int label) : label_(label) {}
  int label_ = 1;
};

struct LabeledDeployment {
  std::string deployment_id;
  signal::SummaryFeatures summary;
  signal::FeatureVector features;
  SedimentClass label;
  std::string site;
  std::string sublocation;
};

// Gradation/plasticity criteria. Boundary convention: fines exactly 12% maps
// to Class 2, liquid limit exactly 50 maps to Class 4 (higher plasticity).
inline SedimentClass assign_class(double sand_content_pct, double fines_content_pct,
                                  std::optional<double> liquid_limit = std::nullopt) {
  if (sand_content_pct < 0.0 || sand_content_pct > 100.0 || fines_content_pct < 0.0 ||
      fines_content_pct > 100.0) {
    throw DataError("gradation percentages must lie in [0, 100]");
  }
  if (sand_content_pct > 50.0) {
    return SedimentClass::from_label(fines_content_pct < 12.0 ? 1 : 2);
  }
  if (fines_content_pct > 50.0) {
    if (!liquid_limit.has_value()) {
      throw Unclassifiable("fines-dominated sample without a liquid limit");
    }
    return SedimentClass::from_label(*liquid_limit < 50.0 ? 3 : 4);
  }
  throw Unclassifiable("neither sand nor fines content exceeds 50%");
}

inline std::array<std::size_t, kNumClasses> class_counts(const std::vector<LabeledDeployment>& rows) {
  std::array<std::size_t, kNumClasses> counts{};
  for (const auto& row : rows) counts[static_cast<std::size_t>(row.label.index())] += 1;
  return counts;
}

// --- manifest ingestion ---

struct RowIssue {
  std::size_t row = 0;  // 1-based data row in the manifest
  std::string message;
};

struct LoadResult {
  std::vector<LabeledDeployment> deployments;
  std::vector<RowIssue> skipped;
  std::vector<RowIssue> warnings;
};

inline const std::vector<std::string>& manifest_header() {
  static const std::vector<std::string> header = {
      "deployment_id", "raw_file",          "site",         "sublocation", "sand_content_pct",
      "fines_content_pct", "liquid_limit",  "uscs_symbol",  "class_label"};
  return header;
}

// One labeled deployment per manifest row; features come from the raw record
// via the signal chain. Rows that fail to parse or classify are skipped and
// reported; the call fails only when nothing loads.
inline LoadResult load_corpus(const std::string& manifest_path, const std::string& raw_dir,
                              const signal::ImpactConfig& impact = {}, int threads = 1) {
  const csv::Table manifest = csv::read_file(manifest_path);
  csv::require_header(manifest, manifest_header(), manifest_path);

  const std::size_t n = manifest.rows.size();
  std::vector<std::optional<LabeledDeployment>> loaded(n);
  std::vector<std::optional<RowIssue>> skipped(n);
  std::vector<std::optional<RowIssue>> warnings(n);

  parallel_for(n, threads, [&](std::size_t i) {
    const auto& row = manifest.rows[i];
    const std::size_t row_number = i + 1;
    try {
      if (row.size() != manifest_header().size()) {
        throw DataError("row has " + std::to_string(row.size()) + " fields, want " +
                        std::to_string(manifest_header().size()));
      }
      LabeledDeployment item;
      item.deployment_id = row[0];
      item.site = row[2];
      item.sublocation = row[3];

      const double sand = csv::parse_double(row[4], "sand_content_pct");
      const double fines = csv::parse_double(row[5], "fines_content_pct");
      std::optional<double> liquid_limit;
      if (!row[6].empty()) liquid_limit = csv::parse_double(row[6], "liquid_limit");

      item.label = assign_class(sand, fines, liquid_limit);
      if (!row[8].empty()) {
        const long stated = csv::parse_long(row[8], "class_label");
        if (stated != item.label.label()) {
          warnings[i] = RowIssue{row_number, "stated class " + std::to_string(stated) +
                                                 " disagrees with criteria class " +
                                                 std::to_string(item.label.label())};
        }
      }

      const std::string raw_path = raw_dir.empty() ? row[1] : raw_dir + "/" + row[1];
      const auto record = signal::read_raw_csv(raw_path, item.deployment_id);
      const auto impact_index = signal::detect_impact(record, impact);
      const auto profile = signal::integrate_profile(record, impact_index);
      item.summary = signal::summary_features(profile);
      item.features = signal::bin_by_depth(signal::normalize(profile));
      loaded[i] = std::move(item);
    } catch (const std::exception& e) {
      skipped[i] = RowIssue{row_number, e.what()};
    }
  });

  LoadResult result;
  for (std::size_t i = 0; i < n; ++i) {
    if (loaded[i]) result.deployments.push_back(std::move(*loaded[i]));
    if (skipped[i]) result.skipped.push_back(std::move(*skipped[i]));
    if (warnings[i]) result.warnings.push_back(std::move(*warnings[i]));
  }
  if (result.deployments.empty()) {
    throw DataError(manifest_path + ": no deployment loaded (" +
                    std::to_string(result.skipped.size()) + " rows skipped)");
  }
  return result;
}

// --- splitting ---

struct SplitSpec {
  double test_fraction = 0.15;
  double validation_fraction = 0.15;  // of the remainder after the test split
  std::uint64_t seed = 0;
  bool stratified = true;

  void validate() const {
    if (!(test_fraction > 0.0 && test_fraction < 1.0) ||
        !(validation_fraction > 0.0 && validation_fraction < 1.0)) {
      throw DataError("split fractions must lie in (0, 1)");
    }
  }
};

struct Split {
  std::vector<LabeledDeployment> train;
  std::vector<LabeledDeployment> validation;
  std::vector<LabeledDeployment> test;
};

namespace detail {

// Largest-remainder apportionment of `total` over `weights`.
inline std::vector<std::size_t> apportion(const std::vector<std::size_t>& weights,
                                          std::size_t total) {
  const double weight_sum =
      static_cast<double>(std::accumulate(weights.begin(), weights.end(), std::size_t{0}));
  std::vector<std::size_t> alloc(weights.size(), 0);
  if (weight_sum == 0.0 || total == 0) return alloc;

  std::vector<double> remainder(weights.size(), 0.0);
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double quota = static_cast<double>(total) * static_cast<double>(weights[i]) / weight_sum;
    alloc[i] = static_cast<std::size_t>(std::floor(quota));
    remainder[i] = quota - std::floor(quota);
    assigned += alloc[i];
  }
  while (assigned < total) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < weights.size(); ++i) {
      if (remainder[i] > remainder[best]) best = i;
    }
    alloc[best] += 1;
    remainder[best] = -1.0;
    assigned += 1;
  }
  // Cap at availability; redistribute any excess to classes with spare rows.
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (alloc[i] > weights[i]) {
      std::size_t excess = alloc[i] - weights[i];
      alloc[i] = weights[i];
      for (std::size_t j = 0; j < weights.size() && excess > 0; ++j) {
        const std::size_t spare = weights[j] - alloc[j];
        const std::size_t take = std::min(spare, excess);
        alloc[j] += take;
        excess -= take;
      }
    }
  }
  return alloc;
}

}  // namespace detail

// Deterministic stratified split. Test gets round(test_fraction * N) rows,
// validation round(validation_fraction * remainder); per-class counts follow
// largest-remainder apportionment, and every class lands in the test set.
inline Split split(const std::vector<LabeledDeployment>& corpus, const SplitSpec& spec) {
  spec.validate();
  if (corpus.empty()) throw DataError("cannot split an empty corpus");

  const std::size_t n = corpus.size();
  Rng rng(mix_seed(spec.seed, 0x5917));

  std::vector<std::vector<std::size_t>> by_class(kNumClasses);
  if (spec.stratified) {
    for (std::size_t i = 0; i < n; ++i) {
      by_class[static_cast<std::size_t>(corpus[i].label.index())].push_back(i);
    }
    for (const auto& members : by_class) {
      if (!members.empty() && members.size() < 3) {
        throw ClassTooSmall("a class has fewer than 3 members; stratified split impossible");
      }
    }
  } else {
    by_class.resize(1);
    by_class[0].resize(n);
    for (std::size_t i = 0; i < n; ++i) by_class[0][i] = i;
  }
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    Rng class_rng = rng.fork(c + 1);
    class_rng.shuffle(by_class[c]);
  }

  std::vector<std::size_t> counts(by_class.size());
  for (std::size_t c = 0; c < by_class.size(); ++c) counts[c] = by_class[c].size();

  const auto test_total =
      static_cast<std::size_t>(std::llround(spec.test_fraction * static_cast<double>(n)));
  auto test_alloc = detail::apportion(counts, test_total);
  if (spec.stratified) {
    // Every non-empty class appears in the test set whenever the quota can
    // hold one row per class; below that the allocation stays proportional.
    const auto populated = static_cast<std::size_t>(
        std::count_if(counts.begin(), counts.end(), [](std::size_t c) { return c > 0; }));
    if (test_total >= populated) {
      for (std::size_t c = 0; c < counts.size(); ++c) {
        if (counts[c] > 0 && test_alloc[c] == 0) {
          std::size_t donor = counts.size();
          for (std::size_t j = 0; j < counts.size(); ++j) {
            if (test_alloc[j] > 1 && (donor == counts.size() || test_alloc[j] > test_alloc[donor])) {
              donor = j;
            }
          }
          if (donor == counts.size()) break;
          test_alloc[donor] -= 1;
          test_alloc[c] += 1;
        }
      }
    }
  }

  std::vector<std::size_t> remaining(counts.size());
  for (std::size_t c = 0; c < counts.size(); ++c) remaining[c] = counts[c] - test_alloc[c];
  const std::size_t rest = n - test_total;
  const auto val_total =
      static_cast<std::size_t>(std::llround(spec.validation_fraction * static_cast<double>(rest)));
  const auto val_alloc = detail::apportion(remaining, val_total);

  std::vector<std::size_t> test_idx, val_idx, train_idx;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    const auto& members = by_class[c];
    std::size_t pos = 0;
    for (std::size_t k = 0; k < test_alloc[c]; ++k) test_idx.push_back(members[pos++]);
    for (std::size_t k = 0; k < val_alloc[c]; ++k) val_idx.push_back(members[pos++]);
    for (; pos < members.size(); ++pos) train_idx.push_back(members[pos]);
  }
  std::sort(test_idx.begin(), test_idx.end());
  std::sort(val_idx.begin(), val_idx.end());
  std::sort(train_idx.begin(), train_idx.end());

  Split result;
  for (const auto i : test_idx) result.test.push_back(corpus[i]);
  for (const auto i : val_idx) result.validation.push_back(corpus[i]);
  for (const auto i : train_idx) result.train.push_back(corpus[i]);
  return result;
}

// --- scaling ---

// Z-score parameters for both feature spaces, fitted on training rows only.
struct ScalerParams {
  std::array<double, 2> summary_mean{};
  std::array<double, 2> summary_sd{};
  std::array<double, signal::kFeatureBins> bin_mean{};
  std::array<double, signal::kFeatureBins> bin_sd{};
};

inline ScalerParams fit_scaler(const std::vector<LabeledDeployment>& train) {
  if (train.empty()) throw DataError("cannot fit a scaler on an empty training set");
  const double n = static_cast<double>(train.size());

  ScalerParams params;
  for (const auto& row : train) {
    params.summary_mean[0] += row.summary.normalized_max_decel_per_s;
    params.summary_mean[1] += row.summary.penetration_depth_m;
    for (std::size_t k = 0; k < signal::kFeatureBins; ++k) params.bin_mean[k] += row.features.bins[k];
  }
  for (auto& m : params.summary_mean) m /= n;
  for (auto& m : params.bin_mean) m /= n;

  for (const auto& row : train) {
    const double d0 = row.summary.normalized_max_decel_per_s - params.summary_mean[0];
    const double d1 = row.summary.penetration_depth_m - params.summary_mean[1];
    params.summary_sd[0] += d0 * d0;
    params.summary_sd[1] += d1 * d1;
    for (std::size_t k = 0; k < signal::kFeatureBins; ++k) {
      const double d = row.features.bins[k] - params.bin_mean[k];
      params.bin_sd[k] += d * d;
    }
  }
  const auto finish = [n](double accum) {
    const double sd = std::sqrt(accum / n);  // population deviation
    return sd > 0.0 ? sd : 1.0;              // constant features pass through
  };
  for (auto& s : params.summary_sd) s = finish(s);
  for (auto& s : params.bin_sd) s = finish(s);
  return params;
}

inline LabeledDeployment apply_scaler(const ScalerParams& params, const LabeledDeployment& row) {
  LabeledDeployment out = row;
  out.summary.normalized_max_decel_per_s =
      (row.summary.normalized_max_decel_per_s - params.summary_mean[0]) / params.summary_sd[0];
  out.summary.penetration_depth_m =
      (row.summary.penetration_depth_m - params.summary_mean[1]) / params.summary_sd[1];
  for (std::size_t k = 0; k < signal::kFeatureBins; ++k) {
    out.features.bins[k] = (row.features.bins[k] - params.bin_mean[k]) / params.bin_sd[k];
  }
  return out;
}

inline std::vector<LabeledDeployment> apply_scaler(const ScalerParams& params,
                                                   const std::vector<LabeledDeployment>& rows) {
  std::vector<LabeledDeployment> out;
  out.reserve(rows.size());
  for (const auto& row : rows) out.push_back(apply_scaler(params, row));
  return out;
}

// --- oversampling ---

// Duplicates minority rows uniformly at random until every class matches the
// majority count. Output keeps the originals first, in order.
inline std::vector<LabeledDeployment> random_oversample(const std::vector<LabeledDeployment>& train,
                                                        std::uint64_t seed) {
  if (train.empty()) throw DataError("cannot oversample an empty training set");
  const auto counts = class_counts(train);
  const std::size_t majority = *std::max_element(counts.begin(), counts.end());

  std::array<std::vector<std::size_t>, kNumClasses> by_class;
  for (std::size_t i = 0; i < train.size(); ++i) {
    by_class[static_cast<std::size_t>(train[i].label.index())].push_back(i);
  }

  std::vector<LabeledDeployment> out = train;
  Rng rng(seed);
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    if (by_class[c].empty()) continue;
    for (std::size_t k = counts[c]; k < majority; ++k) {
      out.push_back(train[by_class[c][rng.index(by_class[c].size())]]);
    }
  }
  return out;
}

struct AdasynConfig {
  int k = 5;
  double beta = 1.0;  // 1 = aim for full balance
  std::uint64_t seed = 0;
};

namespace detail {

inline double bin_distance_sq(const LabeledDeployment& a, const LabeledDeployment& b) {
  double sum = 0.0;
  for (std::size_t k = 0; k < signal::kFeatureBins; ++k) {
    const double d = a.features.bins[k] - b.features.bins[k];
    sum += d * d;
  }
  return sum;
}

// Indices of the k nearest candidates (ties broken by lower index).
inline std::vector<std::size_t> k_nearest(const std::vector<LabeledDeployment>& rows,
                                          std::size_t self, const std::vector<std::size_t>& pool,
                                          std::size_t k) {
  std::vector<std::pair<double, std::size_t>> dist;
  dist.reserve(pool.size());
  for (const auto j : pool) {
    if (j == self) continue;
    dist.emplace_back(bin_distance_sq(rows[self], rows[j]), j);
  }
  const std::size_t take = std::min(k, dist.size());
  std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(take), dist.end());
  std::vector<std::size_t> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) out.push_back(dist[i].second);
  return out;
}

}  // namespace detail

// Adaptive synthetic oversampling in the scaled 211-bin feature space. Each
// minority class is grown toward the majority count; rows with more
// out-of-class neighbors generate more synthetics, each one a convex
// combination of the row and a same-class neighbor.
inline std::vector<LabeledDeployment> adasyn(const std::vector<LabeledDeployment>& train,
                                             const AdasynConfig& config = {}) {
  if (train.empty()) throw DataError("cannot oversample an empty training set");
  if (config.k < 1) throw DataError("adasyn requires k >= 1");
  const auto k = static_cast<std::size_t>(config.k);

  const auto counts = class_counts(train);
  const std::size_t majority = *std::max_element(counts.begin(), counts.end());

  std::array<std::vector<std::size_t>, kNumClasses> by_class;
  std::vector<std::size_t> everyone(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) {
    everyone[i] = i;
    by_class[static_cast<std::size_t>(train[i].label.index())].push_back(i);
  }

  std::vector<LabeledDeployment> out = train;
  Rng rng(config.seed);
  std::size_t synth_counter = 0;

  for (std::size_t c = 0; c < kNumClasses; ++c) {
    const auto& members = by_class[c];
    if (members.empty() || members.size() >= majority) continue;
    if (members.size() < k + 1) {
      throw TooFewNeighbors("class " + std::to_string(c + 1) + " has " +
                            std::to_string(members.size()) + " rows, needs k+1 = " +
                            std::to_string(k + 1));
    }

    const double total_new =
        config.beta * static_cast<double>(majority - members.size());

    // Hardness ratio per row: out-of-class share among its k nearest
    // neighbors over the whole training set.
    std::vector<double> ratio(members.size(), 0.0);
    double ratio_sum = 0.0;
    for (std::size_t m = 0; m < members.size(); ++m) {
      const auto neighbors = detail::k_nearest(train, members[m], everyone, k);
      std::size_t foreign = 0;
      for (const auto j : neighbors) {
        if (train[j].label.index() != static_cast<int>(c)) ++foreign;
      }
      ratio[m] = static_cast<double>(foreign) / static_cast<double>(k);
      ratio_sum += ratio[m];
    }

    for (std::size_t m = 0; m < members.size(); ++m) {
      // All-interior minority (no out-of-class neighbors anywhere): spread
      // the quota uniformly instead of dividing by zero.
      const double share = ratio_sum > 0.0 ? ratio[m] / ratio_sum
                                           : 1.0 / static_cast<double>(members.size());
      const auto quota = static_cast<std::size_t>(std::llround(share * total_new));
      if (quota == 0) continue;

      const auto same_class = detail::k_nearest(train, members[m], members, k);
      const auto& base = train[members[m]];
      for (std::size_t g = 0; g < quota; ++g) {
        const auto& partner = train[same_class[rng.index(same_class.size())]];
        const double lambda = rng.uniform();

        LabeledDeployment synth;
        synth.deployment_id = "adasyn_" + std::to_string(c + 1) + "_" + std::to_string(synth_counter++);
        synth.label = base.label;
        synth.site = base.site;
        synth.sublocation = base.sublocation;
        synth.features.valid_bins = std::max(base.features.valid_bins, partner.features.valid_bins);
        for (std::size_t kbin = 0; kbin < signal::kFeatureBins; ++kbin) {
          const double a = base.features.bins[kbin];
          const double b = partner.features.bins[kbin];
          synth.features.bins[kbin] = a + lambda * (b - a);
        }
        synth.summary.normalized_max_decel_per_s =
            base.summary.normalized_max_decel_per_s +
            lambda * (partner.summary.normalized_max_decel_per_s -
                      base.summary.normalized_max_decel_per_s);
        synth.summary.penetration_depth_m =
            base.summary.penetration_depth_m +
            lambda * (partner.summary.penetration_depth_m - base.summary.penetration_depth_m);
        out.push_back(std::move(synth));
      }
    }
  }
  return out;
}

}  // namespace pffp::corpus
