// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "sapd/geometry.hpp"
#include "sapd/losses.hpp"
#include "sapd/optimizer.hpp"
#include "sapd/selection.hpp"
#include "sapd/weighting.hpp"

namespace sapd {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Flat dotted-key configuration. Every key has a default; unknown keys and
/// malformed values are rejected with ConfigError.
///
/// Text form: one `key = value` per line, `#` starts a comment.
class RunConfig {
 public:
  RunConfig();

  static RunConfig parse(std::string_view text);
  static RunConfig load(const std::filesystem::path& path);

  void set(std::string_view key, std::string_view value);
  /// Applies a `key=value` override.
  void apply_override(std::string_view assignment);
  const std::string& get(std::string_view key) const;

  long long get_int(std::string_view key) const;
  double get_double(std::string_view key) const;
  bool get_bool(std::string_view key) const;
  std::vector<std::string> get_list(std::string_view key) const;

  /// Every key, sorted, with its resolved value.
  std::string serialize() const;
  void save(const std::filesystem::path& path) const;

  const std::map<std::string, std::string, std::less<>>& entries() const { return values_; }
  static std::vector<std::string> known_keys();

 private:
  std::map<std::string, std::string, std::less<>> values_;
};

struct DataSettings {
  std::uint64_t seed = 1;  // scene generation, independent of the training seed
  int num_classes = 3;
  int train_count = 2000;
  int test_count = 200;
  float min_size = 20.0f;
  float max_size = 48.0f;
  int max_instances = 8;
  float noise = 0.08f;
};

struct ModelSettings {
  int stem_width = 16;
  int width = 32;
  int head_convs = 2;
  float init_sigma = 0.01f;
  float prior = 0.01f;
  float loc_bias = 0.1f;
};

struct TrainSettings {
  int epochs = 8;
  int batch_size = 8;
  float learning_rate = 0.03f;
  SgdConfig sgd;
  int phase_switch_epoch = 4;
  std::vector<double> lr_drops{0.75, 0.9167};
  float lr_gamma = 0.1f;
  int warmup_iters = 100;
  bool flip = true;
  double divergence_factor = 1000.0;
};

struct InferSettings {
  float score_threshold = 0.05f;
  int top_n = 1000;
  float nms_threshold = 0.5f;
};

struct AblationGrid {
  std::vector<bool> soft_weighting;
  std::vector<bool> soft_selection;
  std::vector<float> eta;
  std::vector<int> top_k;
  std::vector<WeightMode> mode;
  std::vector<std::uint64_t> seeds;

  std::size_t size() const {
    return soft_weighting.size() * soft_selection.size() * eta.size() * top_k.size() *
           mode.size() * seeds.size();
  }
};

/// Typed, validated view of a RunConfig.
struct Settings {
  std::uint64_t seed = 0;
  PyramidSpec pyramid;
  float z = 4.0f;
  SoftWeightConfig weighting;
  bool selection_enabled = true;
  SelectionConfig selection;
  FocalConfig focal;
  DataSettings data;
  ModelSettings model;
  TrainSettings train;
  InferSettings infer;
  int dump_max_images = 16;
  AblationGrid ablation;
};

/// Throws ConfigError when a value is out of range or inconsistent.
Settings resolve(const RunConfig& config);

}  // namespace sapd
