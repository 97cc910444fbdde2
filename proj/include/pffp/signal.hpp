#pragma once
// Penetrometer signal processing: impact detection, integration of the
// deceleration record to velocity and displacement, normalization by impact
// velocity, and reduction to the fixed 211-bin depth profile.
//
// Units: the raw channel is deceleration in g; everything downstream is SI.
// All functions are pure and safe to call concurrently.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "pffp/csv.hpp"
#include "pffp/errors.hpp"

namespace pffp::signal {

inline constexpr double kGravity = 9.80665;  // m/s^2 per g
inline constexpr std::size_t kFeatureBins = 211;
inline constexpr double kBinWidthM = 0.01;
inline constexpr double kMaxBinnedDepthM = 2.11;

struct RawRecord {
  std::vector<double> time_s;
  std::vector<double> accel_g;  // measured deceleration, g units
  double sampling_rate_hz = 2000.0;
  std::string deployment_id;

  std::size_t size() const { return time_s.size(); }

  // Times strictly increasing, intervals within 1% of nominal, non-empty.
  void validate() const {
    if (time_s.empty() || time_s.size() != accel_g.size()) {
      throw DataError("record '" + deployment_id + "': empty or mismatched sample arrays");
    }
    if (!(sampling_rate_hz > 0.0)) {
      throw DataError("record '" + deployment_id + "': non-positive sampling rate");
    }
    const double nominal_dt = 1.0 / sampling_rate_hz;
    for (std::size_t i = 1; i < time_s.size(); ++i) {
      const double dt = time_s[i] - time_s[i - 1];
      if (!(dt > 0.0)) {
        throw DataError("record '" + deployment_id + "': times not strictly increasing");
      }
      if (std::abs(dt - nominal_dt) > 0.01 * nominal_dt) {
        throw DataError("record '" + deployment_id + "': sampling interval drifts >1% from nominal");
      }
    }
  }
};

struct ImpactConfig {
  double threshold_g = 1.0;           // rise above free-fall baseline
  std::size_t hold = 10;              // consecutive samples above threshold
  std::size_t baseline_window = 100;  // leading samples used for the baseline
};

struct PenetrationProfile {
  std::vector<double> displacement_m;    // non-decreasing from 0
  std::vector<double> deceleration_ms2;  // SI, aligned with displacement
  std::vector<double> velocity_ms;
  double impact_velocity_ms = 0.0;
  double max_deceleration_ms2 = 0.0;
  double penetration_depth_m = 0.0;
};

struct NormalizedProfile {
  std::vector<double> displacement_m;
  std::vector<double> values_per_s;  // deceleration / impact velocity
  double penetration_depth_m = 0.0;
};

// Fixed-length CNN input: mean normalized deceleration per 1 cm of depth.
struct FeatureVector {
  std::array<double, kFeatureBins> bins{};
  int valid_bins = 0;  // bins inside the penetration depth
};

struct SummaryFeatures {
  double normalized_max_decel_per_s = 0.0;
  double penetration_depth_m = 0.0;
};

// First sample where deceleration exceeds the free-fall baseline by
// config.threshold_g and stays above it for config.hold samples. The baseline
// is the mean of the leading baseline_window samples.
inline std::size_t detect_impact(const RawRecord& record, const ImpactConfig& config = {}) {
  record.validate();
  const std::size_t n = record.size();
  const std::size_t window = std::min<std::size_t>(std::max<std::size_t>(config.baseline_window, 1), n);
  double baseline = 0.0;
  for (std::size_t i = 0; i < window; ++i) baseline += record.accel_g[i];
  baseline /= static_cast<double>(window);

  const double level = baseline + config.threshold_g;
  std::size_t run_start = 0;
  std::size_t run = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (record.accel_g[i] > level) {
      if (run == 0) run_start = i;
      if (++run >= config.hold) return run_start;
    } else {
      run = 0;
    }
  }
  if (run > 0 && run_start + config.hold > n) {
    throw TooShort("record '" + record.deployment_id + "': ends inside the impact transient");
  }
  throw NoImpactFound("record '" + record.deployment_id + "': deceleration never exceeds baseline + threshold");
}

// Velocity gained over the water column: trapezoidal integral of
// (g - measured deceleration) over the free-fall samples [0, impact_index).
inline double estimate_impact_velocity(const RawRecord& record, std::size_t impact_index) {
  record.validate();
  if (impact_index >= record.size()) {
    throw DataError("impact index out of range");
  }
  double v = 0.0;
  for (std::size_t i = 1; i < impact_index; ++i) {
    const double dt = record.time_s[i] - record.time_s[i - 1];
    const double a0 = kGravity * (1.0 - record.accel_g[i - 1]);
    const double a1 = kGravity * (1.0 - record.accel_g[i]);
    v += 0.5 * (a0 + a1) * dt;
  }
  return v;
}

// Integrates the penetration phase. Velocity decays from the impact velocity
// under the measured deceleration; the series is truncated at the first
// zero-crossing of velocity. A record that ends with residual velocity within
// 5% of the impact velocity is accepted as stopped (integration drift guard).
inline PenetrationProfile integrate_profile(const RawRecord& record, std::size_t impact_index,
                                            double impact_velocity_ms) {
  record.validate();
  if (impact_index >= record.size()) {
    throw DataError("impact index out of range");
  }
  if (!(impact_velocity_ms > 0.0)) {
    throw NonPositiveImpactVelocity();
  }

  const std::size_t n = record.size() - impact_index;
  PenetrationProfile profile;
  profile.impact_velocity_ms = impact_velocity_ms;
  profile.displacement_m.reserve(n);
  profile.deceleration_ms2.reserve(n);
  profile.velocity_ms.reserve(n);

  profile.displacement_m.push_back(0.0);
  profile.deceleration_ms2.push_back(record.accel_g[impact_index] * kGravity);
  profile.velocity_ms.push_back(impact_velocity_ms);

  bool stopped = false;
  for (std::size_t i = 1; i < n; ++i) {
    const std::size_t k = impact_index + i;
    const double dt = record.time_s[k] - record.time_s[k - 1];
    const double a0 = profile.deceleration_ms2.back();
    const double a1 = record.accel_g[k] * kGravity;
    const double v0 = profile.velocity_ms.back();
    double v1 = v0 - 0.5 * (a0 + a1) * dt;
    if (v1 <= 0.0) {
      v1 = 0.0;
      stopped = true;
    }
    const double d1 = profile.displacement_m.back() + 0.5 * (v0 + v1) * dt;
    profile.deceleration_ms2.push_back(a1);
    profile.velocity_ms.push_back(v1);
    profile.displacement_m.push_back(d1);
    if (stopped) break;
  }

  if (!stopped && profile.velocity_ms.back() > 0.05 * impact_velocity_ms) {
    throw VelocityNeverReachesZero("record '" + record.deployment_id +
                                   "': residual velocity above 5% of impact velocity");
  }

  profile.penetration_depth_m = profile.displacement_m.back();
  profile.max_deceleration_ms2 =
      *std::max_element(profile.deceleration_ms2.begin(), profile.deceleration_ms2.end());
  return profile;
}

inline PenetrationProfile integrate_profile(const RawRecord& record, std::size_t impact_index) {
  return integrate_profile(record, impact_index, estimate_impact_velocity(record, impact_index));
}

inline NormalizedProfile normalize(const PenetrationProfile& profile) {
  if (!(profile.impact_velocity_ms > 0.0)) {
    throw NonPositiveImpactVelocity();
  }
  NormalizedProfile out;
  out.displacement_m = profile.displacement_m;
  out.penetration_depth_m = profile.penetration_depth_m;
  out.values_per_s.reserve(profile.deceleration_ms2.size());
  for (const double a : profile.deceleration_ms2) {
    out.values_per_s.push_back(a / profile.impact_velocity_ms);
  }
  return out;
}

// Mean normalized deceleration per 1 cm bin. Empty bins inside the
// penetration depth inherit the previous bin's value; bins beyond the depth
// stay zero. Negative bin means (baseline noise) are clamped to zero.
inline FeatureVector bin_by_depth(const NormalizedProfile& profile) {
  if (profile.penetration_depth_m > kMaxBinnedDepthM) {
    throw DepthExceedsRange("penetration depth " + std::to_string(profile.penetration_depth_m) +
                            " m exceeds " + std::to_string(kMaxBinnedDepthM) + " m");
  }
  // ceil with a guard against representation error in metres->cm
  const double depth_cm = profile.penetration_depth_m / kBinWidthM;
  int valid = static_cast<int>(std::ceil(depth_cm - 1e-9));
  valid = std::clamp(valid, 0, static_cast<int>(kFeatureBins));

  FeatureVector out;
  out.valid_bins = valid;

  std::array<double, kFeatureBins> sum{};
  std::array<std::size_t, kFeatureBins> count{};
  for (std::size_t i = 0; i < profile.displacement_m.size(); ++i) {
    const int bin = static_cast<int>(std::floor(profile.displacement_m[i] / kBinWidthM + 1e-9));
    if (bin < 0 || bin >= valid) continue;
    sum[static_cast<std::size_t>(bin)] += profile.values_per_s[i];
    count[static_cast<std::size_t>(bin)] += 1;
  }

  double previous = 0.0;
  for (int k = 0; k < valid; ++k) {
    const auto idx = static_cast<std::size_t>(k);
    double value = count[idx] > 0 ? sum[idx] / static_cast<double>(count[idx]) : previous;
    if (value < 0.0) value = 0.0;
    out.bins[idx] = value;
    previous = value;
  }
  return out;
}

inline SummaryFeatures summary_features(const PenetrationProfile& profile) {
  if (!(profile.impact_velocity_ms > 0.0)) {
    throw NonPositiveImpactVelocity();
  }
  return {profile.max_deceleration_ms2 / profile.impact_velocity_ms, profile.penetration_depth_m};
}

// Raw deployment file: CSV with header `time_s,accel_g`, one row per sample.
inline RawRecord read_raw_csv(const std::string& path, std::string deployment_id = "") {
  const csv::Table table = csv::read_file(path);
  csv::require_header(table, {"time_s", "accel_g"}, path);
  if (table.rows.empty()) throw DataError(path + ": no samples");

  RawRecord record;
  if (deployment_id.empty()) {
    record.deployment_id = std::filesystem::path(path).stem().string();
  } else {
    record.deployment_id = std::move(deployment_id);
  }
  record.time_s.reserve(table.rows.size());
  record.accel_g.reserve(table.rows.size());
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    if (row.size() != 2) {
      throw DataError(path + ": row " + std::to_string(i + 1) + " has " +
                      std::to_string(row.size()) + " fields, want 2");
    }
    record.time_s.push_back(csv::parse_double(row[0], "time_s"));
    record.accel_g.push_back(csv::parse_double(row[1], "accel_g"));
  }
  if (record.time_s.size() >= 2) {
    const double span = record.time_s.back() - record.time_s.front();
    if (!(span > 0.0)) throw DataError(path + ": times not increasing");
    record.sampling_rate_hz = static_cast<double>(record.time_s.size() - 1) / span;
  }
  record.validate();
  return record;
}

}  // namespace pffp::signal
