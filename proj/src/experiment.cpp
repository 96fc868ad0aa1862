// SPDX-License-Identifier: Apache-2.0
#include "sapd/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "sapd/rng.hpp"

namespace sapd {

std::vector<Scene> generate_train_set(const Settings& s) {
  return generate_scenes(s.data.train_count, derive_seed(s.data.seed, 1), s.pyramid.image_width,
                         s.data);
}

std::vector<Scene> generate_test_set(const Settings& s) {
  return generate_scenes(s.data.test_count, derive_seed(s.data.seed, 2), s.pyramid.image_width,
                         s.data);
}

ApMetrics evaluate_detections(std::span<const ImageDetections> detections,
                              const std::vector<Scene>& scenes, int num_classes) {
  std::vector<std::vector<Detection>> dets(scenes.size());
  std::vector<std::vector<GroundTruthBox>> gts;
  gts.reserve(scenes.size());
  for (const Scene& scene : scenes) gts.push_back(scene.boxes);
  for (const ImageDetections& img : detections) {
    const auto it = std::find_if(scenes.begin(), scenes.end(),
                                 [&](const Scene& s) { return s.name == img.image; });
    if (it == scenes.end()) {
      throw std::runtime_error("detections reference unknown image " + img.image);
    }
    auto& slot = dets[static_cast<std::size_t>(it - scenes.begin())];
    slot.insert(slot.end(), img.detections.begin(), img.detections.end());
  }
  return evaluate(dets, gts, num_classes);
}

EvaluationRun evaluate_model(const Model& model, const std::vector<Scene>& scenes,
                             const Settings& settings) {
  EvaluationRun run;
  run.detections.reserve(scenes.size());
  for (const Scene& scene : scenes) {
    run.detections.push_back({scene.name, infer(model, scene.image.to_tensor(), settings)});
  }
  run.metrics = evaluate_detections(run.detections, scenes, settings.data.num_classes);
  return run;
}

namespace {

BatchResult inspect(Model& model, const Scene& scene, const Settings& s) {
  const Tensor image = scene.image.to_tensor();
  const Sample sample{&image, scene.boxes};
  return run_batch(model, std::span<const Sample>(&sample, 1), TrainPhase::soft, s, false);
}

std::string stem(const std::string& name) {
  return std::filesystem::path(name).stem().string();
}

}  // namespace

void dump_selection_weights(Model& model, const std::vector<Scene>& scenes, const Settings& s,
                            const std::filesystem::path& csv_path) {
  if (!s.selection_enabled) {
    throw std::runtime_error("dump_selection_weights: selection network disabled in config");
  }
  std::ofstream out(csv_path);
  if (!out) throw std::runtime_error("cannot write " + csv_path.string());
  out << "image,instance";
  for (int l = 0; l < s.pyramid.num_levels(); ++l) out << ",P" << s.pyramid.level_at(l);
  out << '\n';
  const std::size_t n = std::min(scenes.size(), static_cast<std::size_t>(s.dump_max_images));
  char buf[32];
  for (std::size_t k = 0; k < n; ++k) {
    const BatchResult r = inspect(model, scenes[k], s);
    for (std::size_t b = 0; b < r.routing[0].size(); ++b) {
      out << stem(scenes[k].name) << ',' << b;
      const auto& w = r.routing[0][b].level_weights;
      for (int l = 0; l < s.pyramid.num_levels(); ++l) {
        out << ',';
        if (!w.empty()) {
          std::snprintf(buf, sizeof buf, "%.6f", static_cast<double>(w[static_cast<std::size_t>(l)]));
          out << buf;
        }
      }
      out << '\n';
    }
  }
  if (!out) throw std::runtime_error("write failed: " + csv_path.string());
}

void dump_weight_maps(Model& model, const std::vector<Scene>& scenes, const Settings& s,
                      const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const std::size_t n = std::min(scenes.size(), static_cast<std::size_t>(s.dump_max_images));
  const int width = s.pyramid.image_width;
  const int height = s.pyramid.image_height;
  for (std::size_t k = 0; k < n; ++k) {
    const BatchResult r = inspect(model, scenes[k], s);
    for (int l = 0; l < s.pyramid.num_levels(); ++l) {
      const LevelTargets& t = r.targets[0].levels[static_cast<std::size_t>(l)];
      const int stride = s.pyramid.stride(s.pyramid.level_at(l));
      std::vector<std::uint8_t> pixels(static_cast<std::size_t>(width * height), 0);
      for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
          const std::size_t a = t.index(x / stride, y / stride);
          if (t.instance[a] < 0) continue;
          const float v = std::clamp(t.weight[a], 0.0f, 1.0f) * 255.0f;
          pixels[static_cast<std::size_t>(y * width + x)] = static_cast<std::uint8_t>(std::lround(v));
        }
      }
      write_pgm(dir / (stem(scenes[k].name) + "_P" + std::to_string(s.pyramid.level_at(l)) + ".pgm"),
                width, height, pixels);
    }
  }
}

std::string ablation_header() {
  return "sw,ss,eta,k,mode,seed,ap,ap50,ap75,final_loss";
}

std::string ablation_row(const AblationRow& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%s,%s,%g,%d,%s,%llu,%.6f,%.6f,%.6f,%.6g",
                r.soft_weighting ? "on" : "off", r.soft_selection ? "on" : "off",
                static_cast<double>(r.eta), r.top_k, std::string(to_string(r.mode)).c_str(),
                static_cast<unsigned long long>(r.seed), r.metrics.ap, r.metrics.ap50,
                r.metrics.ap75, r.final_loss);
  return buf;
}

std::vector<AblationRow> run_ablation(const RunConfig& base, const std::vector<Scene>& train_set,
                                      const std::vector<Scene>& test_set,
                                      const std::function<void(const AblationRow&)>& on_row) {
  const Settings grid_settings = resolve(base);
  const AblationGrid& grid = grid_settings.ablation;
  std::vector<AblationRow> rows;
  rows.reserve(grid.size());
  for (bool sw : grid.soft_weighting) {
    for (bool ss : grid.soft_selection) {
      for (float eta : grid.eta) {
        for (int k : grid.top_k) {
          for (WeightMode mode : grid.mode) {
            for (std::uint64_t seed : grid.seeds) {
              RunConfig c = base;
              c.set("weighting.enabled", sw ? "true" : "false");
              c.set("selection.enabled", ss ? "true" : "false");
              c.set("weighting.eta", std::to_string(eta));
              c.set("selection.top_k", std::to_string(k));
              c.set("weighting.mode", to_string(mode));
              c.set("seed", std::to_string(seed));
              const Settings s = resolve(c);
              Model model(s);
              const auto records = train(model, train_set, s, s.seed);
              AblationRow row{sw, ss, eta, k, mode, seed, {}, records.back().loss.total};
              row.metrics = evaluate_model(model, test_set, s).metrics;
              rows.push_back(row);
              if (on_row) on_row(row);
            }
          }
        }
      }
    }
  }
  return rows;
}

}  // namespace sapd
