#include "pffp/signal.hpp"

#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <vector>

#include "pffp/rng.hpp"
#include "support/helpers.hpp"

using namespace pffp;
using testsupport::make_decel_record;
using testsupport::make_record;

namespace {

constexpr double kDt = 0.0005;  // 2 kHz

std::vector<double> zeros(std::size_t n) { return std::vector<double>(n, 0.0); }

}  // namespace

TEST_CASE("detect_impact finds a step after free fall", "[signal]") {
  auto accel = zeros(1000);  // 0.5 s of free fall
  accel.insert(accel.end(), 200, 5.0);
  const auto record = make_record(kDt, accel);
  CHECK(signal::detect_impact(record) == 1000);
}

TEST_CASE("detect_impact rejects an all-zero record", "[signal]") {
  const auto record = make_record(kDt, zeros(2000));
  CHECK_THROWS_AS(signal::detect_impact(record), NoImpactFound);
}

TEST_CASE("detect_impact on a ramp matches an independent scan", "[signal]") {
  // Ramp crossing 1 g at t = 0.30 s.
  const double slope_g_per_s = 1.0 / 0.30;
  std::vector<double> accel;
  for (std::size_t i = 0; i < 1600; ++i) {
    accel.push_back(slope_g_per_s * static_cast<double>(i) * kDt);
  }
  const auto record = make_record(kDt, accel);
  const signal::ImpactConfig config;

  // Oracle: baseline from the leading window, then a plain scan for the first
  // run of `hold` samples above baseline + threshold.
  double baseline = 0.0;
  for (std::size_t i = 0; i < config.baseline_window; ++i) baseline += accel[i];
  baseline /= static_cast<double>(config.baseline_window);
  std::size_t expected = accel.size();
  for (std::size_t i = 0; i + config.hold <= accel.size(); ++i) {
    bool all_above = true;
    for (std::size_t j = i; j < i + config.hold; ++j) {
      if (!(accel[j] > baseline + config.threshold_g)) {
        all_above = false;
        break;
      }
    }
    if (all_above) {
      expected = i;
      break;
    }
  }
  REQUIRE(expected < accel.size());
  CHECK(signal::detect_impact(record, config) == expected);
  CHECK(accel[expected] > baseline + config.threshold_g);
}

TEST_CASE("detect_impact reports a record truncated inside the transient", "[signal]") {
  auto accel = zeros(500);
  accel.insert(accel.end(), 4, 5.0);  // fewer than `hold` samples remain
  const auto record = make_record(kDt, accel);
  CHECK_THROWS_AS(signal::detect_impact(record), TooShort);
}

TEST_CASE("integrate_profile matches constant-deceleration kinematics", "[signal]") {
  const auto record = make_decel_record(kDt, 0.25, [](double) { return 25.0; });
  const auto profile = signal::integrate_profile(record, 0, 5.0);
  const double expected_depth = 5.0 * 5.0 / (2.0 * 25.0);  // v^2 / 2a = 0.5 m
  CHECK(std::abs(profile.penetration_depth_m - expected_depth) / expected_depth < 1e-3);
  CHECK(profile.max_deceleration_ms2 == Catch::Approx(25.0));
  CHECK(profile.velocity_ms.front() == Catch::Approx(5.0));
  CHECK(profile.velocity_ms.back() <= 0.05 * 5.0);
}

TEST_CASE("integrate_profile rejects non-positive impact velocity", "[signal]") {
  const auto record = make_decel_record(kDt, 0.1, [](double) { return 25.0; });
  CHECK_THROWS_AS(signal::integrate_profile(record, 0, 0.0), NonPositiveImpactVelocity);
  CHECK_THROWS_AS(signal::integrate_profile(record, 0, -1.0), NonPositiveImpactVelocity);
}

TEST_CASE("integrate_profile matches the linear-ramp closed form", "[signal]") {
  // a(t) = k t, v0 = 4 m/s; stop at t* = sqrt(2 v0 / k),
  // depth = v0 t* - k t*^3 / 6.
  const double k = 500.0;
  const double v0 = 4.0;
  const double t_stop = std::sqrt(2.0 * v0 / k);
  const double expected_depth = v0 * t_stop - k * t_stop * t_stop * t_stop / 6.0;

  const auto record = make_decel_record(kDt, t_stop * 1.5, [k](double t) { return k * t; });
  const auto profile = signal::integrate_profile(record, 0, v0);
  CHECK(std::abs(profile.penetration_depth_m - expected_depth) / expected_depth < 1e-3);
}

TEST_CASE("integrate_profile requires the probe to stop", "[signal]") {
  // Weak constant deceleration, record far too short to stop the probe.
  const auto record = make_decel_record(kDt, 0.05, [](double) { return 2.0; });
  CHECK_THROWS_AS(signal::integrate_profile(record, 0, 5.0), VelocityNeverReachesZero);
}

TEST_CASE("normalize divides by impact velocity", "[signal]") {
  signal::PenetrationProfile profile;
  profile.displacement_m = {0.0, 0.01};
  profile.deceleration_ms2 = {10.0, 20.0};
  profile.velocity_ms = {2.0, 0.0};
  profile.impact_velocity_ms = 2.0;
  profile.penetration_depth_m = 0.01;
  profile.max_deceleration_ms2 = 20.0;

  const auto normalized = signal::normalize(profile);
  REQUIRE(normalized.values_per_s.size() == 2);
  CHECK(normalized.values_per_s[0] == Catch::Approx(5.0));
  CHECK(normalized.values_per_s[1] == Catch::Approx(10.0));
  CHECK(normalized.displacement_m == profile.displacement_m);

  profile.impact_velocity_ms = 1.0;
  const auto identity = signal::normalize(profile);
  CHECK(identity.values_per_s == profile.deceleration_ms2);

  profile.impact_velocity_ms = 0.0;
  CHECK_THROWS_AS(signal::normalize(profile), NonPositiveImpactVelocity);
}

TEST_CASE("normalize is invariant under joint scaling of signal and velocity", "[signal]") {
  Rng rng(7);
  signal::PenetrationProfile profile;
  for (int i = 0; i < 40; ++i) {
    profile.displacement_m.push_back(0.001 * i);
    profile.deceleration_ms2.push_back(rng.uniform(1.0, 80.0));
    profile.velocity_ms.push_back(3.0);
  }
  profile.impact_velocity_ms = 3.7;
  profile.penetration_depth_m = profile.displacement_m.back();

  auto scaled = profile;
  const double c = 2.5;
  scaled.impact_velocity_ms *= c;
  for (auto& a : scaled.deceleration_ms2) a *= c;

  const auto base = signal::normalize(profile);
  const auto after = signal::normalize(scaled);
  for (std::size_t i = 0; i < base.values_per_s.size(); ++i) {
    CHECK(after.values_per_s[i] == Catch::Approx(base.values_per_s[i]).epsilon(1e-12));
  }
}

TEST_CASE("bin_by_depth averages per centimetre and pads with zeros", "[signal]") {
  signal::NormalizedProfile profile;
  // Constant 4.0 over 0-3 cm, dense sampling.
  for (int i = 0; i <= 300; ++i) {
    profile.displacement_m.push_back(i * 1e-4);
    profile.values_per_s.push_back(4.0);
  }
  profile.penetration_depth_m = 0.03;

  const auto fv = signal::bin_by_depth(profile);
  CHECK(fv.valid_bins == 3);
  CHECK(fv.bins[0] == Catch::Approx(4.0));
  CHECK(fv.bins[1] == Catch::Approx(4.0));
  CHECK(fv.bins[2] == Catch::Approx(4.0));
  for (std::size_t k = 3; k < signal::kFeatureBins; ++k) {
    CHECK(fv.bins[k] == 0.0);
  }
}

TEST_CASE("bin_by_depth rejects depths beyond the feature range", "[signal]") {
  signal::NormalizedProfile profile;
  profile.displacement_m = {0.0, 2.5};
  profile.values_per_s = {1.0, 1.0};
  profile.penetration_depth_m = 2.5;
  CHECK_THROWS_AS(signal::bin_by_depth(profile), DepthExceedsRange);
}

TEST_CASE("bin_by_depth matches a brute-force per-bin average", "[signal]") {
  // Piecewise profile: 2.0 over [0,1) cm, 6.0 over [1,2) cm.
  signal::NormalizedProfile profile;
  for (int i = 0; i < 200; ++i) {
    const double d = i * 1e-4;
    profile.displacement_m.push_back(d);
    profile.values_per_s.push_back(d < 0.01 ? 2.0 : 6.0);
  }
  profile.penetration_depth_m = profile.displacement_m.back();

  const auto fv = signal::bin_by_depth(profile);
  REQUIRE(fv.valid_bins == 2);

  // Oracle: direct per-bin averaging over the same samples.
  for (int k = 0; k < fv.valid_bins; ++k) {
    double sum = 0.0;
    int count = 0;
    for (std::size_t i = 0; i < profile.displacement_m.size(); ++i) {
      const double cm = profile.displacement_m[i] * 100.0;
      if (cm >= k && cm < k + 1) {
        sum += profile.values_per_s[i];
        ++count;
      }
    }
    REQUIRE(count > 0);
    CHECK(fv.bins[static_cast<std::size_t>(k)] == Catch::Approx(sum / count));
  }
  CHECK(fv.bins[0] == Catch::Approx(2.0));
  CHECK(fv.bins[1] == Catch::Approx(6.0));
  CHECK(fv.bins[2] == 0.0);
}

TEST_CASE("bin_by_depth fills sampling gaps from the previous bin", "[signal]") {
  signal::NormalizedProfile profile;
  // Samples only in bins 0 and 2; bin 1 has no samples.
  profile.displacement_m = {0.0, 0.005, 0.021, 0.025};
  profile.values_per_s = {3.0, 5.0, 9.0, 11.0};
  profile.penetration_depth_m = 0.03;

  const auto fv = signal::bin_by_depth(profile);
  REQUIRE(fv.valid_bins == 3);
  CHECK(fv.bins[0] == Catch::Approx(4.0));
  CHECK(fv.bins[1] == Catch::Approx(4.0));  // inherited
  CHECK(fv.bins[2] == Catch::Approx(10.0));
}

TEST_CASE("summary_features divides the peak by impact velocity", "[signal]") {
  signal::PenetrationProfile profile;
  profile.impact_velocity_ms = 5.0;
  profile.max_deceleration_ms2 = 50.0;
  profile.penetration_depth_m = 0.08;

  auto summary = signal::summary_features(profile);
  CHECK(summary.normalized_max_decel_per_s == Catch::Approx(10.0));
  CHECK(summary.penetration_depth_m == Catch::Approx(0.08));

  profile.impact_velocity_ms = 1.0;
  summary = signal::summary_features(profile);
  CHECK(summary.normalized_max_decel_per_s == Catch::Approx(50.0));

  profile.impact_velocity_ms = 0.0;
  CHECK_THROWS_AS(signal::summary_features(profile), NonPositiveImpactVelocity);
}

TEST_CASE("summary_features of the constant-deceleration profile", "[signal]") {
  const auto record = make_decel_record(kDt, 0.25, [](double) { return 25.0; });
  const auto profile = signal::integrate_profile(record, 0, 5.0);
  const auto summary = signal::summary_features(profile);
  CHECK(summary.normalized_max_decel_per_s == Catch::Approx(5.0).epsilon(1e-6));
  CHECK(summary.penetration_depth_m == Catch::Approx(0.5).epsilon(1e-3));
}

TEST_CASE("kinematics round-trip for generated deceleration shapes", "[signal]") {
  struct Case {
    std::function<double(double)> decel;
    double v0;
    double analytic_depth;
  };
  // Closed forms: constant a, linear ramp kt, and a + bt.
  const double a0 = 40.0, v1 = 6.0;
  const double k = 800.0, v2 = 5.0;
  const double c0 = 10.0, c1 = 300.0, v3 = 4.0;
  // For a(t) = c0 + c1 t: v(t) = v0 - c0 t - c1 t^2/2; solve v(t*) = 0.
  const double t3 = (-c0 + std::sqrt(c0 * c0 + 2.0 * c1 * v3)) / c1;
  const std::vector<Case> cases = {
      {[a0](double) { return a0; }, v1, v1 * v1 / (2.0 * a0)},
      {[k](double t) { return k * t; }, v2,
       v2 * std::sqrt(2.0 * v2 / k) - k * std::pow(std::sqrt(2.0 * v2 / k), 3) / 6.0},
      {[c0, c1](double t) { return c0 + c1 * t; }, v3,
       v3 * t3 - c0 * t3 * t3 / 2.0 - c1 * t3 * t3 * t3 / 6.0},
  };

  for (const auto& c : cases) {
    const auto record = make_decel_record(kDt, 1.0, c.decel);
    const auto profile = signal::integrate_profile(record, 0, c.v0);
    CHECK(std::abs(profile.penetration_depth_m - c.analytic_depth) / c.analytic_depth < 1e-3);
  }
}

TEST_CASE("velocity is non-increasing for non-negative deceleration", "[signal]") {
  Rng rng(42);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> accel;
    for (int i = 0; i < 1200; ++i) accel.push_back(rng.uniform(0.0, 8.0));
    const auto record = make_record(kDt, accel);
    const auto profile = signal::integrate_profile(record, 0, 6.0);
    for (std::size_t i = 1; i < profile.velocity_ms.size(); ++i) {
      REQUIRE(profile.velocity_ms[i] <= profile.velocity_ms[i - 1] + 1e-12);
    }
    for (std::size_t i = 1; i < profile.displacement_m.size(); ++i) {
      REQUIRE(profile.displacement_m[i] >= profile.displacement_m[i - 1]);
    }
  }
}

TEST_CASE("feature vector length is fixed regardless of input", "[signal]") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    signal::NormalizedProfile profile;
    const double depth = rng.uniform(0.02, 2.0);
    const int samples = 50 + static_cast<int>(rng.index(400));
    for (int i = 0; i <= samples; ++i) {
      profile.displacement_m.push_back(depth * i / samples);
      profile.values_per_s.push_back(rng.uniform(0.0, 30.0));
    }
    profile.penetration_depth_m = depth;
    const auto fv = signal::bin_by_depth(profile);
    CHECK(fv.bins.size() == signal::kFeatureBins);
    CHECK(fv.valid_bins >= 0);
    CHECK(fv.valid_bins <= static_cast<int>(signal::kFeatureBins));
    for (std::size_t kbin = static_cast<std::size_t>(fv.valid_bins); kbin < signal::kFeatureBins;
         ++kbin) {
      REQUIRE(fv.bins[kbin] == 0.0);
    }
    for (int kbin = 0; kbin < fv.valid_bins; ++kbin) {
      REQUIRE(std::isfinite(fv.bins[static_cast<std::size_t>(kbin)]));
      REQUIRE(fv.bins[static_cast<std::size_t>(kbin)] >= 0.0);
    }
  }
}

TEST_CASE("read_raw_csv parses the documented format", "[signal]") {
  testsupport::TempDir dir("rawcsv");
  dir.write_file("drop.csv",
                 "time_s,accel_g\n"
                 "0.0000,0.01\n"
                 "0.0005,0.02\n"
                 "0.0010,5.00\n"
                 "0.0015,5.10\n");
  const auto record = signal::read_raw_csv(dir.str("drop.csv"));
  CHECK(record.deployment_id == "drop");
  REQUIRE(record.size() == 4);
  CHECK(record.accel_g[2] == Catch::Approx(5.0));
  CHECK(record.sampling_rate_hz == Catch::Approx(2000.0));

  dir.write_file("bad.csv", "time,acc\n0,0\n");
  CHECK_THROWS_AS(signal::read_raw_csv(dir.str("bad.csv")), DataError);

  dir.write_file("junk.csv", "time_s,accel_g\n0.0,zero\n");
  CHECK_THROWS_AS(signal::read_raw_csv(dir.str("junk.csv")), DataError);
}

TEST_CASE("estimate_impact_velocity integrates the free-fall segment", "[signal]") {
  // Near-zero reading during the fall: velocity grows at ~g.
  auto accel = zeros(1000);  // 0.5 s
  accel.insert(accel.end(), 400, 8.0);
  const auto record = make_record(kDt, accel);
  const auto impact = signal::detect_impact(record);
  const double v = signal::estimate_impact_velocity(record, impact);
  const double fall_duration = record.time_s[impact - 1] - record.time_s[0];
  CHECK(v == Catch::Approx(signal::kGravity * fall_duration).epsilon(1e-9));
}
