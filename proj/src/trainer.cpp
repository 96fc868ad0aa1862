// SPDX-License-Identifier: Apache-2.0
#include "sapd/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "sapd/optimizer.hpp"
#include "sapd/rng.hpp"

namespace sapd {

namespace {

DetectorConfig detector_config(const Settings& s) {
  return {s.pyramid, s.data.num_classes, s.model};
}

// Loss terms and raw gradients of every anchor in one image, in level-major,
// row-major order. Gradients carry the anchor's mode weight but not yet the
// normalizing denominator.
struct ImageLoss {
  std::vector<AnchorLoss> anchors;
  PyramidOutputs grads;
};

ImageLoss image_loss(const PyramidOutputs& outputs, const TargetMaps& targets,
                     const Settings& s, bool want_grads) {
  ImageLoss out;
  const WeightMode mode = s.weighting.mode;
  std::size_t total = 0;
  for (const LevelTargets& t : targets.levels) total += t.cls.size();
  out.anchors.reserve(total);
  if (want_grads) out.grads.resize(outputs.size());

  for (std::size_t l = 0; l < outputs.size(); ++l) {
    const LevelOutputs& o = outputs[l];
    const LevelTargets& t = targets.levels[l];
    const std::size_t num_classes = o.cls_logits.dim(0);
    const std::size_t plane = static_cast<std::size_t>(t.grid_width * t.grid_height);
    if (want_grads) {
      out.grads[l].cls_logits = Tensor(o.cls_logits.shape());
      out.grads[l].loc_raw = Tensor(o.loc_raw.shape());
    }
    std::vector<float> logits(num_classes);
    for (int j = 0; j < t.grid_height; ++j) {
      for (int i = 0; i < t.grid_width; ++i) {
        const std::size_t a = t.index(i, j);
        for (std::size_t k = 0; k < num_classes; ++k) logits[k] = o.cls_logits.values()[k * plane + a];
        AnchorLoss al;
        al.positive = t.instance[a] >= 0;
        al.weight = t.weight[a];
        const auto focal = focal_loss<float>(logits, al.positive ? t.cls[a] : 0, s.focal);
        al.cls = focal.loss;
        if (want_grads) {
          const float wc = cls_weight(al, mode);
          float* g = out.grads[l].cls_logits.data();
          for (std::size_t k = 0; k < num_classes; ++k) g[k * plane + a] = wc * focal.grad[k];
        }
        if (al.positive) {
          const DistanceTargets pred = predicted_distances(o.loc_raw, i, j);
          const auto p = as_array(pred);
          const auto iou = iou_loss<float>(p, as_array(t.loc[a]));
          al.loc = iou.loss;
          if (want_grads) {
            const float wl = loc_weight(al, mode);
            float* g = out.grads[l].loc_raw.data();
            for (std::size_t k = 0; k < 4; ++k) g[k * plane + a] = wl * iou.grad[k] * p[k];
          }
        }
        out.anchors.push_back(al);
      }
    }
  }
  return out;
}

}  // namespace

Model::Model(const Settings& settings)
    : detector(detector_config(settings)),
      select_net(settings.pyramid.num_levels() * settings.model.width, settings.selection.width,
                 settings.selection.roi_size, settings.pyramid.num_levels()) {}

void Model::initialize(std::uint64_t seed) {
  detector.initialize(derive_seed(seed, 1));
  select_net.initialize(detector.config().model.init_sigma, derive_seed(seed, 2));
}

std::vector<Parameter*> Model::parameters() {
  auto params = detector.parameters();
  for (Parameter* p : select_net.parameters()) params.push_back(p);
  return params;
}

std::vector<const Parameter*> Model::parameters() const {
  auto params = detector.parameters();
  for (const Parameter* p : select_net.parameters()) params.push_back(p);
  return params;
}

void Model::save(const std::filesystem::path& path) const { save_checkpoint(path, parameters()); }

void Model::load(const std::filesystem::path& path) { load_checkpoint(path, parameters()); }

BatchResult run_batch(Model& model, std::span<const Sample> batch, TrainPhase phase,
                      const Settings& s, bool accumulate_gradients) {
  const PyramidSpec& pyramid = s.pyramid;
  const int num_levels = pyramid.num_levels();
  const SelectionConfig& sel = s.selection;
  BatchResult result;
  result.routing.resize(batch.size());
  result.targets.resize(batch.size());

  std::vector<ToyDetector::ForwardPass> passes;
  passes.reserve(batch.size());
  for (const Sample& sample : batch) passes.push_back(model.detector.forward(*sample.image));

  // Instance-dependent level losses and the min-loss level of every instance.
  std::size_t supervised = 0;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    for (const GroundTruthBox& box : batch[b].boxes) {
      InstanceRouting r;
      r.level_losses.resize(static_cast<std::size_t>(num_levels));
      for (int l = 0; l < num_levels; ++l) {
        r.level_losses[static_cast<std::size_t>(l)] = instance_level_loss(
            box, pyramid.level_at(l), passes[b].outputs[static_cast<std::size_t>(l)],
            s.weighting.epsilon, s.z, s.focal);
      }
      r.min_loss_level = hard_select(r.level_losses);
      if (r.min_loss_level) {
        ++supervised;
      } else {
        ++result.skipped_instances;
      }
      result.routing[b].push_back(std::move(r));
    }
  }

  // Feature selection network: cross entropy against the min-loss level.
  double select_sum = 0.0;
  std::vector<std::vector<Tensor>> feature_grads(batch.size());
  const bool couple = accumulate_gradients && sel.couple_features;
  if (s.selection_enabled && supervised > 0) {
    const float scale = sel.lambda / static_cast<float>(supervised);
    for (std::size_t b = 0; b < batch.size(); ++b) {
      std::vector<Tensor> features;
      for (int l = 0; l < num_levels; ++l) features.push_back(passes[b].feature(l));
      if (couple) {
        for (const Tensor& f : features) feature_grads[b].emplace_back(f.shape());
      }
      for (std::size_t n = 0; n < batch[b].boxes.size(); ++n) {
        InstanceRouting& r = result.routing[b][n];
        if (!r.min_loss_level) continue;
        const CornerBox roi = to_corners(batch[b].boxes[n]);
        const Tensor block = extract_instance_feature(features, pyramid, roi, sel.roi_size,
                                                      sel.sampling_ratio);
        const auto acts = model.select_net.forward(block);
        const SelectLoss ce = select_net_loss(acts.probs, *r.min_loss_level);
        select_sum += ce.loss;
        r.level_weights = acts.probs;
        if (accumulate_gradients && scale > 0.0f) {
          std::vector<float> g = ce.grad_logits;
          for (float& v : g) v *= scale;
          const Tensor grad_block = model.select_net.backward(acts, g);
          if (couple) {
            extract_instance_feature_backward(grad_block, pyramid, roi, sel.roi_size,
                                              sel.sampling_ratio, feature_grads[b]);
          }
        }
      }
    }
  }
  const double select_mean = supervised > 0 ? select_sum / static_cast<double>(supervised) : 0.0;

  // Level assignment and targets.
  const bool soft = phase == TrainPhase::soft && s.selection_enabled;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    std::vector<std::vector<LevelAssignment>> assignments;
    for (InstanceRouting& r : result.routing[b]) {
      if (!r.min_loss_level) {
        r.assignment.clear();
      } else if (soft) {
        r.assignment = soft_assign(r.level_losses, r.level_weights, sel.top_k);
      } else {
        r.assignment = {LevelAssignment{*r.min_loss_level, std::nullopt}};
      }
      assignments.push_back(r.assignment);
    }
    result.targets[b] = build_targets(batch[b].boxes, assignments, pyramid, s.weighting, s.z);
  }

  // Weighted detection loss normalized over the whole batch.
  std::vector<AnchorLoss> all;
  std::vector<PyramidOutputs> grads(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    ImageLoss il = image_loss(passes[b].outputs, result.targets[b], s, accumulate_gradients);
    all.insert(all.end(), il.anchors.begin(), il.anchors.end());
    grads[b] = std::move(il.grads);
  }
  const double lambda = s.selection_enabled ? sel.lambda : 0.0;
  result.loss = total_loss(all, s.weighting.mode, select_mean, lambda);

  if (accumulate_gradients) {
    const float inv = static_cast<float>(1.0 / result.loss.positive_weight_sum);
    for (std::size_t b = 0; b < batch.size(); ++b) {
      for (LevelOutputs& g : grads[b]) {
        g.cls_logits *= inv;
        g.loc_raw *= inv;
      }
      model.detector.backward(passes[b], grads[b], feature_grads[b]);
    }
  }
  return result;
}

float scheduled_learning_rate(const TrainSettings& train, int iteration, int total_iterations) {
  float lr = train.learning_rate;
  for (double fraction : train.lr_drops) {
    const int drop_at = static_cast<int>(std::floor(fraction * total_iterations));
    if (iteration >= drop_at) lr *= train.lr_gamma;
  }
  if (iteration < train.warmup_iters) {
    const float t = static_cast<float>(iteration) / static_cast<float>(train.warmup_iters);
    lr *= 1.0f / 3.0f + (2.0f / 3.0f) * t;
  }
  return lr;
}

int iterations_per_epoch(std::size_t dataset_size, int batch_size) {
  return static_cast<int>((dataset_size + static_cast<std::size_t>(batch_size) - 1) /
                          static_cast<std::size_t>(batch_size));
}

std::vector<IterationRecord> train(Model& model, const std::vector<Scene>& dataset,
                                   const Settings& s, std::uint64_t seed,
                                   const std::function<void(const IterationRecord&)>& on_iteration) {
  if (dataset.empty()) throw std::invalid_argument("train: empty dataset");
  model.initialize(seed);
  const TrainSettings& ts = s.train;
  SgdOptimizer optimizer(ts.sgd);
  const auto params = model.parameters();
  SplitMix64 rng(derive_seed(seed, 3));

  const int per_epoch = iterations_per_epoch(dataset.size(), ts.batch_size);
  const int total_iterations = per_epoch * ts.epochs;
  const float width = static_cast<float>(s.pyramid.image_width);

  std::vector<std::size_t> order(dataset.size());
  std::vector<IterationRecord> records;
  records.reserve(static_cast<std::size_t>(total_iterations));
  double initial_total = 0.0;
  int iteration = 0;
  for (int epoch = 0; epoch < ts.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<std::size_t>(rng.below(i))]);
    }
    const TrainPhase phase = epoch < ts.phase_switch_epoch ? TrainPhase::hard : TrainPhase::soft;
    for (int it = 0; it < per_epoch; ++it, ++iteration) {
      const std::size_t begin = static_cast<std::size_t>(it) * static_cast<std::size_t>(ts.batch_size);
      const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(ts.batch_size));
      std::vector<Tensor> images;
      std::vector<std::vector<GroundTruthBox>> boxes;
      images.reserve(end - begin);
      for (std::size_t k = begin; k < end; ++k) {
        const Scene& scene = dataset[order[k]];
        const bool flip = ts.flip && rng.uniform() < 0.5;
        images.push_back(flip ? scene.image.flipped().to_tensor() : scene.image.to_tensor());
        boxes.push_back(flip ? flip_boxes(scene.boxes, width) : scene.boxes);
      }
      std::vector<Sample> batch;
      for (std::size_t k = 0; k < images.size(); ++k) batch.push_back({&images[k], boxes[k]});

      SgdOptimizer::zero_grad(params);
      const BatchResult r = run_batch(model, batch, phase, s, true);
      IterationRecord rec{iteration, r.loss, phase,
                          scheduled_learning_rate(ts, iteration, total_iterations)};
      if (iteration == 0) initial_total = r.loss.total;
      if (!std::isfinite(r.loss.total) ||
          (initial_total > 0.0 && r.loss.total > ts.divergence_factor * initial_total)) {
        char msg[160];
        std::snprintf(msg, sizeof msg, "training diverged at iteration %d: loss %.6g (initial %.6g)",
                      iteration, r.loss.total, initial_total);
        throw TrainingDiverged(msg);
      }
      optimizer.step(params, rec.learning_rate);
      records.push_back(rec);
      if (on_iteration) on_iteration(rec);
    }
  }
  return records;
}

std::string metrics_header() { return "iter,total,cls,loc,select,pos_weight_sum,phase,lr"; }

std::string metrics_row(const IterationRecord& r) {
  const double den = r.loss.positive_weight_sum;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%.9g,%.9g,%.9g,%d,%.9g", r.iteration, r.loss.total,
                r.loss.cls_sum / den, r.loss.loc_sum / den, r.loss.select_net,
                r.loss.positive_weight_sum, static_cast<int>(r.phase),
                static_cast<double>(r.learning_rate));
  return buf;
}

}  // namespace sapd
