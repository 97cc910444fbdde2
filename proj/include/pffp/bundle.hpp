#pragma once
// Single-file model container: JSON header with provenance plus base64
// little-endian binary arrays for every parameter block, guarded by a CRC32
// over the concatenated payloads. Saving is byte-deterministic, so equal
// models produce equal files.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pffp/bnn.hpp"
#include "pffp/corpus.hpp"
#include "pffp/errors.hpp"
#include "pffp/forest.hpp"
#include "pffp/fusion.hpp"
#include "pffp/version.hpp"

namespace pffp::bundle {

inline constexpr int kFormatVersion = 1;
inline constexpr const char* kFormatName = "pffp-bundle";

// --- binary helpers ---

namespace detail {

inline constexpr char kBase64Chars[] =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

inline std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 3 <= bytes.size(); i += 3) {
    const std::uint32_t n = (static_cast<std::uint32_t>(bytes[i]) << 16) |
                            (static_cast<std::uint32_t>(bytes[i + 1]) << 8) | bytes[i + 2];
    out.push_back(kBase64Chars[(n >> 18) & 63]);
    out.push_back(kBase64Chars[(n >> 12) & 63]);
    out.push_back(kBase64Chars[(n >> 6) & 63]);
    out.push_back(kBase64Chars[n & 63]);
  }
  const std::size_t rest = bytes.size() - i;
  if (rest == 1) {
    const std::uint32_t n = static_cast<std::uint32_t>(bytes[i]) << 16;
    out.push_back(kBase64Chars[(n >> 18) & 63]);
    out.push_back(kBase64Chars[(n >> 12) & 63]);
    out.push_back('=');
    out.push_back('=');
  } else if (rest == 2) {
    const std::uint32_t n = (static_cast<std::uint32_t>(bytes[i]) << 16) |
                            (static_cast<std::uint32_t>(bytes[i + 1]) << 8);
    out.push_back(kBase64Chars[(n >> 18) & 63]);
    out.push_back(kBase64Chars[(n >> 12) & 63]);
    out.push_back(kBase64Chars[(n >> 6) & 63]);
    out.push_back('=');
  }
  return out;
}

inline std::vector<std::uint8_t> base64_decode(const std::string& text) {
  std::array<int, 256> lut;
  lut.fill(-1);
  for (int i = 0; i < 64; ++i) lut[static_cast<unsigned char>(kBase64Chars[i])] = i;

  std::vector<std::uint8_t> out;
  out.reserve(text.size() / 4 * 3);
  std::uint32_t acc = 0;
  int bits = 0;
  for (const char ch : text) {
    if (ch == '=') break;
    const int v = lut[static_cast<unsigned char>(ch)];
    if (v < 0) throw CorruptBundle("invalid base64 payload");
    acc = (acc << 6) | static_cast<std::uint32_t>(v);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<std::uint8_t>((acc >> bits) & 0xff));
    }
  }
  return out;
}

inline std::uint32_t crc32(const std::vector<std::uint8_t>& bytes, std::uint32_t crc = 0) {
  static const auto table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int bit = 0; bit < 8; ++bit) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  crc = ~crc;
  for (const auto b : bytes) crc = table[(crc ^ b) & 0xff] ^ (crc >> 8);
  return ~crc;
}

template <typename T>
std::vector<std::uint8_t> to_le_bytes(const std::vector<T>& values) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::vector<std::uint8_t> bytes(values.size() * sizeof(T));
  if (!values.empty()) std::memcpy(bytes.data(), values.data(), bytes.size());
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < values.size(); ++i) {
      std::reverse(bytes.begin() + static_cast<std::ptrdiff_t>(i * sizeof(T)),
                   bytes.begin() + static_cast<std::ptrdiff_t>((i + 1) * sizeof(T)));
    }
  }
  return bytes;
}

template <typename T>
std::vector<T> from_le_bytes(std::vector<std::uint8_t> bytes, const char* what) {
  static_assert(std::is_trivially_copyable_v<T>);
  if (bytes.size() % sizeof(T) != 0) {
    throw CorruptBundle(std::string("truncated array '") + what + "'");
  }
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < bytes.size() / sizeof(T); ++i) {
      std::reverse(bytes.begin() + static_cast<std::ptrdiff_t>(i * sizeof(T)),
                   bytes.begin() + static_cast<std::ptrdiff_t>((i + 1) * sizeof(T)));
    }
  }
  std::vector<T> values(bytes.size() / sizeof(T));
  if (!values.empty()) std::memcpy(values.data(), bytes.data(), bytes.size());
  return values;
}

}  // namespace detail

// --- bundle contents ---

struct TrainingProvenance {
  std::uint64_t master_seed = 0;
  std::optional<corpus::SplitSpec> split;  // absent in hand-built bundles
  forest::HyperParams grid_winner;
  double grid_cv_accuracy = 0.0;
  double forest_validation_accuracy = 0.0;
  double network_validation_loss = 0.0;
  double fused_validation_accuracy = 0.0;
  int epochs_run = 0;
  int best_epoch = -1;
  std::int64_t train_rows = 0;
  std::int64_t validation_rows = 0;
  std::int64_t test_rows = 0;
};

struct ModelBundle {
  int format_version = kFormatVersion;
  corpus::ScalerParams scaler;
  forest::ForestModel forest_model;
  bnn::VariationalNetwork network;
  fusion::FusionConfig fusion_config;
  TrainingProvenance provenance;
};

namespace detail {

// Payload blocks in checksum order. Every binary array appears here exactly
// once, so the CRC covers the full numeric state.
class PayloadWalk {
 public:
  explicit PayloadWalk(std::uint32_t crc = 0) : crc_(crc) {}

  std::uint32_t crc() const { return crc_; }

  template <typename T>
  std::string put(const std::vector<T>& values) {
    const auto bytes = to_le_bytes(values);
    crc_ = crc32(bytes, crc_);
    return base64_encode(bytes);
  }

  template <typename T>
  std::vector<T> take(const nlohmann::json& node, const char* what) {
    if (!node.is_string()) throw CorruptBundle(std::string("array '") + what + "' is not base64");
    const auto bytes = base64_decode(node.get<std::string>());
    crc_ = crc32(bytes, crc_);
    return from_le_bytes<T>(bytes, what);
  }

 private:
  std::uint32_t crc_ = 0;
};

inline nlohmann::json hyperparams_to_json(const forest::HyperParams& hp) {
  return {{"n_trees", hp.n_trees},
          {"max_depth", hp.max_depth},
          {"min_samples_split", hp.min_samples_split},
          {"min_samples_leaf", hp.min_samples_leaf},
          {"bootstrap_replacement", hp.bootstrap_replacement},
          {"features_per_split", hp.features_per_split},
          {"seed", hp.seed}};
}

inline forest::HyperParams hyperparams_from_json(const nlohmann::json& node) {
  forest::HyperParams hp;
  hp.n_trees = node.at("n_trees").get<int>();
  hp.max_depth = node.at("max_depth").get<int>();
  hp.min_samples_split = node.at("min_samples_split").get<int>();
  hp.min_samples_leaf = node.at("min_samples_leaf").get<int>();
  hp.bootstrap_replacement = node.at("bootstrap_replacement").get<bool>();
  hp.features_per_split = node.at("features_per_split").get<int>();
  hp.seed = node.at("seed").get<std::uint64_t>();
  return hp;
}

}  // namespace detail

inline nlohmann::json to_json(const ModelBundle& bundle, std::uint32_t* crc_out) {
  detail::PayloadWalk walk;
  nlohmann::json doc;
  doc["format"] = kFormatName;
  doc["format_version"] = bundle.format_version;
  doc["writer_version"] = kVersionString;

  doc["scaler"]["summary_mean"] = walk.put(std::vector<double>(bundle.scaler.summary_mean.begin(),
                                                               bundle.scaler.summary_mean.end()));
  doc["scaler"]["summary_sd"] = walk.put(
      std::vector<double>(bundle.scaler.summary_sd.begin(), bundle.scaler.summary_sd.end()));
  doc["scaler"]["bin_mean"] =
      walk.put(std::vector<double>(bundle.scaler.bin_mean.begin(), bundle.scaler.bin_mean.end()));
  doc["scaler"]["bin_sd"] =
      walk.put(std::vector<double>(bundle.scaler.bin_sd.begin(), bundle.scaler.bin_sd.end()));

  const auto& arch = bundle.network.arch;
  doc["network"]["arch"] = {{"conv1", {arch.conv1.in_channels, arch.conv1.out_channels, arch.conv1.kernel}},
                            {"conv2", {arch.conv2.in_channels, arch.conv2.out_channels, arch.conv2.kernel}},
                            {"fc1_width", arch.fc1_width},
                            {"fc2_width", arch.fc2_width}};
  doc["network"]["prior_variance"] = bundle.network.prior_variance;
  doc["network"]["mean"] = walk.put(bundle.network.mean);
  doc["network"]["rho"] = walk.put(bundle.network.rho);

  doc["forest"]["hyperparams"] = detail::hyperparams_to_json(bundle.forest_model.hyperparams);
  doc["forest"]["trees"] = nlohmann::json::array();
  for (const auto& tree : bundle.forest_model.trees) {
    std::vector<std::int32_t> feature, left, right;
    std::vector<double> threshold;
    std::vector<std::int64_t> counts;
    feature.reserve(tree.size());
    for (const auto& node : tree) {
      feature.push_back(node.feature);
      left.push_back(node.left);
      right.push_back(node.right);
      threshold.push_back(node.threshold);
      for (const auto c : node.counts) counts.push_back(c);
    }
    nlohmann::json tnode;
    tnode["feature"] = walk.put(feature);
    tnode["threshold"] = walk.put(threshold);
    tnode["left"] = walk.put(left);
    tnode["right"] = walk.put(right);
    tnode["counts"] = walk.put(counts);
    doc["forest"]["trees"].push_back(std::move(tnode));
  }

  doc["fusion"] = {{"prior_scale", bundle.fusion_config.prior_scale},
                   {"prior_bias", bundle.fusion_config.prior_bias},
                   {"iterations", bundle.fusion_config.iterations}};

  const auto& prov = bundle.provenance;
  nlohmann::json pnode;
  pnode["master_seed"] = prov.master_seed;
  if (prov.split) {
    pnode["split"] = {{"test_fraction", prov.split->test_fraction},
                      {"validation_fraction", prov.split->validation_fraction},
                      {"seed", prov.split->seed},
                      {"stratified", prov.split->stratified}};
  }
  pnode["grid_winner"] = detail::hyperparams_to_json(prov.grid_winner);
  pnode["grid_cv_accuracy"] = prov.grid_cv_accuracy;
  pnode["forest_validation_accuracy"] = prov.forest_validation_accuracy;
  pnode["network_validation_loss"] = prov.network_validation_loss;
  pnode["fused_validation_accuracy"] = prov.fused_validation_accuracy;
  pnode["epochs_run"] = prov.epochs_run;
  pnode["best_epoch"] = prov.best_epoch;
  pnode["train_rows"] = prov.train_rows;
  pnode["validation_rows"] = prov.validation_rows;
  pnode["test_rows"] = prov.test_rows;
  doc["provenance"] = std::move(pnode);

  if (crc_out) *crc_out = walk.crc();
  doc["checksum_crc32"] = walk.crc();
  return doc;
}

inline void save_bundle(const ModelBundle& bundle, const std::string& path) {
  const auto doc = to_json(bundle, nullptr);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << doc.dump(1) << '\n';
  if (!out) throw DataError("failed writing " + path);
}

inline ModelBundle load_bundle(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);

  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw CorruptBundle(path + ": not a bundle: " + e.what());
  }

  try {
    if (doc.at("format").get<std::string>() != kFormatName) {
      throw CorruptBundle(path + ": unrecognized container format");
    }
    const int version = doc.at("format_version").get<int>();
    if (version != kFormatVersion) {
      throw VersionMismatch(path + ": bundle format version " + std::to_string(version) +
                            ", this build reads version " + std::to_string(kFormatVersion));
    }

    ModelBundle bundle;
    bundle.format_version = version;
    detail::PayloadWalk walk;

    const auto fill = [](auto& dst, const std::vector<double>& src, const char* what) {
      if (src.size() != dst.size()) throw CorruptBundle(std::string("array '") + what + "' has wrong length");
      std::copy(src.begin(), src.end(), dst.begin());
    };
    const auto& scaler = doc.at("scaler");
    fill(bundle.scaler.summary_mean, walk.take<double>(scaler.at("summary_mean"), "summary_mean"),
         "summary_mean");
    fill(bundle.scaler.summary_sd, walk.take<double>(scaler.at("summary_sd"), "summary_sd"),
         "summary_sd");
    fill(bundle.scaler.bin_mean, walk.take<double>(scaler.at("bin_mean"), "bin_mean"), "bin_mean");
    fill(bundle.scaler.bin_sd, walk.take<double>(scaler.at("bin_sd"), "bin_sd"), "bin_sd");

    const auto& network = doc.at("network");
    const auto& arch = network.at("arch");
    bundle.network.arch.conv1 = {arch.at("conv1").at(0).get<int>(), arch.at("conv1").at(1).get<int>(),
                                 arch.at("conv1").at(2).get<int>()};
    bundle.network.arch.conv2 = {arch.at("conv2").at(0).get<int>(), arch.at("conv2").at(1).get<int>(),
                                 arch.at("conv2").at(2).get<int>()};
    bundle.network.arch.fc1_width = arch.at("fc1_width").get<int>();
    bundle.network.arch.fc2_width = arch.at("fc2_width").get<int>();
    bundle.network.arch.validate();
    bundle.network.prior_variance = network.at("prior_variance").get<double>();
    bundle.network.mean = walk.take<double>(network.at("mean"), "mean");
    bundle.network.rho = walk.take<double>(network.at("rho"), "rho");
    if (bundle.network.mean.size() != bundle.network.arch.parameter_count() ||
        bundle.network.rho.size() != bundle.network.mean.size()) {
      throw CorruptBundle(path + ": network parameter arrays disagree with the architecture");
    }

    const auto& forest_node = doc.at("forest");
    bundle.forest_model.hyperparams = detail::hyperparams_from_json(forest_node.at("hyperparams"));
    for (const auto& tnode : forest_node.at("trees")) {
      const auto feature = walk.take<std::int32_t>(tnode.at("feature"), "feature");
      const auto threshold = walk.take<double>(tnode.at("threshold"), "threshold");
      const auto left = walk.take<std::int32_t>(tnode.at("left"), "left");
      const auto right = walk.take<std::int32_t>(tnode.at("right"), "right");
      const auto counts = walk.take<std::int64_t>(tnode.at("counts"), "counts");
      const std::size_t n = feature.size();
      if (threshold.size() != n || left.size() != n || right.size() != n || counts.size() != 4 * n ||
          n == 0) {
        throw CorruptBundle(path + ": tree arrays have inconsistent lengths");
      }
      forest::Tree tree(n);
      for (std::size_t i = 0; i < n; ++i) {
        tree[i].feature = feature[i];
        tree[i].threshold = threshold[i];
        tree[i].left = left[i];
        tree[i].right = right[i];
        for (std::size_t c = 0; c < 4; ++c) tree[i].counts[c] = counts[4 * i + c];
      }
      bundle.forest_model.trees.push_back(std::move(tree));
    }

    const auto checksum = doc.at("checksum_crc32").get<std::uint32_t>();
    if (checksum != walk.crc()) {
      throw CorruptBundle(path + ": checksum mismatch, file is damaged");
    }

    const auto& fusion_node = doc.at("fusion");
    bundle.fusion_config.prior_scale = fusion_node.at("prior_scale").get<double>();
    bundle.fusion_config.prior_bias = fusion_node.at("prior_bias").get<double>();
    bundle.fusion_config.iterations = fusion_node.at("iterations").get<int>();
    bundle.fusion_config.validate();

    const auto& pnode = doc.at("provenance");
    auto& prov = bundle.provenance;
    prov.master_seed = pnode.at("master_seed").get<std::uint64_t>();
    if (pnode.contains("split")) {
      corpus::SplitSpec spec;
      spec.test_fraction = pnode.at("split").at("test_fraction").get<double>();
      spec.validation_fraction = pnode.at("split").at("validation_fraction").get<double>();
      spec.seed = pnode.at("split").at("seed").get<std::uint64_t>();
      spec.stratified = pnode.at("split").at("stratified").get<bool>();
      prov.split = spec;
    }
    prov.grid_winner = detail::hyperparams_from_json(pnode.at("grid_winner"));
    prov.grid_cv_accuracy = pnode.at("grid_cv_accuracy").get<double>();
    prov.forest_validation_accuracy = pnode.at("forest_validation_accuracy").get<double>();
    prov.network_validation_loss = pnode.at("network_validation_loss").get<double>();
    prov.fused_validation_accuracy = pnode.at("fused_validation_accuracy").get<double>();
    prov.epochs_run = pnode.at("epochs_run").get<int>();
    prov.best_epoch = pnode.at("best_epoch").get<int>();
    prov.train_rows = pnode.at("train_rows").get<std::int64_t>();
    prov.validation_rows = pnode.at("validation_rows").get<std::int64_t>();
    prov.test_rows = pnode.at("test_rows").get<std::int64_t>();
    return bundle;
  } catch (const nlohmann::json::exception& e) {
    throw CorruptBundle(path + ": missing or malformed field: " + e.what());
  }
}

}  // namespace pffp::bundle
