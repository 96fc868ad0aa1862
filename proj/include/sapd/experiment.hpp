// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "sapd/config.hpp"
#include "sapd/dataset.hpp"
#include "sapd/evaluation.hpp"
#include "sapd/inference.hpp"
#include "sapd/trainer.hpp"

namespace sapd {

/// Synthetic train and held-out sets drawn from data.seed.
std::vector<Scene> generate_train_set(const Settings& settings);
std::vector<Scene> generate_test_set(const Settings& settings);

struct EvaluationRun {
  ApMetrics metrics;
  std::vector<ImageDetections> detections;
};

EvaluationRun evaluate_model(const Model& model, const std::vector<Scene>& scenes,
                             const Settings& settings);

ApMetrics evaluate_detections(std::span<const ImageDetections> detections,
                              const std::vector<Scene>& scenes, int num_classes);

/// Per-instance selection-network probabilities for the first
/// dump.max_images scenes: CSV `image,instance,P<l>...`.
void dump_selection_weights(Model& model, const std::vector<Scene>& scenes,
                            const Settings& settings, const std::filesystem::path& csv_path);

/// Per-level anchor weight maps of the soft-assigned targets, one PGM per
/// scene and level (`<stem>_P<l>.pgm`), upsampled to the image size. Positive
/// anchors show w * 255, everything else 0.
void dump_weight_maps(Model& model, const std::vector<Scene>& scenes, const Settings& settings,
                      const std::filesystem::path& dir);

struct AblationRow {
  bool soft_weighting = true;
  bool soft_selection = true;
  float eta = 1.0f;
  int top_k = 3;
  WeightMode mode = WeightMode::both;
  std::uint64_t seed = 0;
  ApMetrics metrics;
  double final_loss = 0.0;
};

std::string ablation_header();
std::string ablation_row(const AblationRow& row);

/// Trains and evaluates every configuration of the ablation grid in a fixed
/// order (sw, ss, eta, k, mode, seed; last varies fastest).
std::vector<AblationRow> run_ablation(const RunConfig& base, const std::vector<Scene>& train_set,
                                      const std::vector<Scene>& test_set,
                                      const std::function<void(const AblationRow&)>& on_row = {});

}  // namespace sapd
