#pragma once
// Shared builders for test records and temp files.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "pffp/signal.hpp"

namespace testsupport {

// Record sampled at fixed dt from explicit g-values.
inline pffp::signal::RawRecord make_record(double dt, const std::vector<double>& accel_g,
                                           const std::string& id = "test") {
  pffp::signal::RawRecord record;
  record.deployment_id = id;
  record.sampling_rate_hz = 1.0 / dt;
  record.time_s.reserve(accel_g.size());
  for (std::size_t i = 0; i < accel_g.size(); ++i) {
    record.time_s.push_back(static_cast<double>(i) * dt);
  }
  record.accel_g = accel_g;
  return record;
}

// Penetration-only record from a deceleration function of time (m/s^2).
inline pffp::signal::RawRecord make_decel_record(double dt, double duration_s,
                                                 const std::function<double(double)>& decel_ms2,
                                                 const std::string& id = "test") {
  std::vector<double> accel_g;
  const auto n = static_cast<std::size_t>(duration_s / dt) + 1;
  accel_g.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    accel_g.push_back(decel_ms2(static_cast<double>(i) * dt) / pffp::signal::kGravity);
  }
  return make_record(dt, accel_g, id);
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    base_ = std::filesystem::temp_directory_path() /
            ("pffp_" + tag + "_" + std::to_string(counter()++));
    std::filesystem::create_directories(base_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(base_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::filesystem::path path() const { return base_; }
  std::string str(const std::string& name) const { return (base_ / name).string(); }

  void write_file(const std::string& name, const std::string& content) const {
    std::ofstream out(base_ / name, std::ios::binary);
    out << content;
  }

 private:
  static int& counter() {
    static int c = 0;
    return c;
  }
  std::filesystem::path base_;
};

}  // namespace testsupport
