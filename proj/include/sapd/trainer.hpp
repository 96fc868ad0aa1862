// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "sapd/config.hpp"
#include "sapd/dataset.hpp"
#include "sapd/detector.hpp"
#include "sapd/losses.hpp"
#include "sapd/selection.hpp"
#include "sapd/targets.hpp"

namespace sapd {

/// Detector plus feature-selection network, the unit that gets checkpointed.
class Model {
 public:
  explicit Model(const Settings& settings);

  void initialize(std::uint64_t seed);

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;

  void save(const std::filesystem::path& path) const;
  void load(const std::filesystem::path& path);

  ToyDetector detector;
  SelectNet select_net;
};

enum class TrainPhase { hard = 1, soft = 2 };

struct Sample {
  const Tensor* image = nullptr;  // (3, H, W)
  std::span<const GroundTruthBox> boxes;
};

/// How one instance was routed to pyramid levels in a step.
struct InstanceRouting {
  std::vector<float> level_losses;       // kUnreachableLevel where no anchor fits
  std::optional<int> min_loss_level;     // nullopt: instance skipped
  std::vector<float> level_weights;      // selection-net softmax; empty when unused
  std::vector<LevelAssignment> assignment;
};

struct BatchResult {
  LossBreakdown loss;
  std::vector<std::vector<InstanceRouting>> routing;  // [image][instance]
  std::vector<TargetMaps> targets;                    // [image]
  std::size_t skipped_instances = 0;
};

/// One training step's forward computation over a batch. With
/// `accumulate_gradients` the gradients of the total loss are added into
/// every parameter's grad buffer (which the caller zeroes).
BatchResult run_batch(Model& model, std::span<const Sample> batch, TrainPhase phase,
                      const Settings& settings, bool accumulate_gradients);

struct IterationRecord {
  int iteration = 0;
  LossBreakdown loss;
  TrainPhase phase = TrainPhase::hard;
  float learning_rate = 0.0f;
};

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Learning rate at `iteration` (0-based) of `total_iterations`: linear warmup
/// from a third of the base rate, then step drops at the configured fractions.
float scheduled_learning_rate(const TrainSettings& train, int iteration, int total_iterations);

int iterations_per_epoch(std::size_t dataset_size, int batch_size);

/// Two-phase training. The model is initialized from `seed`; data order and
/// flips are drawn from the same seed. Throws TrainingDiverged when the total
/// loss exceeds divergence_factor times its first value or is not finite.
std::vector<IterationRecord> train(Model& model, const std::vector<Scene>& dataset,
                                   const Settings& settings, std::uint64_t seed,
                                   const std::function<void(const IterationRecord&)>& on_iteration = {});

/// CSV header and row of the per-iteration metrics log.
std::string metrics_header();
std::string metrics_row(const IterationRecord& record);

}  // namespace sapd
