// SPDX-License-Identifier: Apache-2.0
#include "sapd/sapd.h"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "sapd/experiment.hpp"

struct sapd_config {
  sapd::RunConfig config;
};

struct sapd_model {
  sapd::RunConfig config;
  sapd::Settings settings;
  std::unique_ptr<sapd::Model> model;
};

struct sapd_detections {
  std::vector<sapd::Detection> items;
};

namespace {

thread_local std::string g_last_error;

sapd_status fail(sapd_status status, const std::string& message) {
  g_last_error = message;
  return status;
}

template <typename Fn>
sapd_status guarded(Fn&& fn) {
  try {
    g_last_error.clear();
    fn();
    return SAPD_OK;
  } catch (const sapd::ConfigError& e) {
    return fail(SAPD_ERR_CONFIG, e.what());
  } catch (const sapd::TrainingDiverged& e) {
    return fail(SAPD_ERR_DIVERGED, e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(SAPD_ERR_IO, e.what());
  } catch (const std::invalid_argument& e) {
    return fail(SAPD_ERR_INVALID_ARGUMENT, e.what());
  } catch (const std::domain_error& e) {
    return fail(SAPD_ERR_INVALID_ARGUMENT, e.what());
  } catch (const std::out_of_range& e) {
    return fail(SAPD_ERR_OUT_OF_RANGE, e.what());
  } catch (const std::runtime_error& e) {
    return fail(SAPD_ERR_IO, e.what());
  } catch (const std::exception& e) {
    return fail(SAPD_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(SAPD_ERR_INTERNAL, "unknown error");
  }
}

#define SAPD_REQUIRE(cond, what) \
  if (!(cond)) return fail(SAPD_ERR_INVALID_ARGUMENT, what)

std::vector<sapd::Scene> scenes_or(const char* dir, std::vector<sapd::Scene> (*fallback)(const sapd::Settings&),
                                   const sapd::Settings& s) {
  return dir != nullptr ? sapd::load_dataset(dir) : fallback(s);
}

void write_metrics_json(const std::filesystem::path& path, const sapd::ApMetrics& m) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << nlohmann::json{{"ap", m.ap}, {"ap50", m.ap50}, {"ap75", m.ap75},
                        {"per_threshold", m.per_threshold}}.dump(2)
      << '\n';
}

sapd_metrics to_c(const sapd::ApMetrics& m) { return {m.ap, m.ap50, m.ap75}; }

}  // namespace

extern "C" {

const char* sapd_last_error(void) { return g_last_error.c_str(); }

const char* sapd_status_name(sapd_status status) {
  switch (status) {
    case SAPD_OK: return "ok";
    case SAPD_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case SAPD_ERR_CONFIG: return "config";
    case SAPD_ERR_IO: return "io";
    case SAPD_ERR_DIVERGED: return "diverged";
    case SAPD_ERR_OUT_OF_RANGE: return "out_of_range";
    case SAPD_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

const char* sapd_version(void) { return "0.1.0"; }

sapd_status sapd_config_create(sapd_config** out) {
  SAPD_REQUIRE(out != nullptr, "sapd_config_create: out is NULL");
  return guarded([&] { *out = new sapd_config{}; });
}

sapd_status sapd_config_load(const char* path, sapd_config** out) {
  SAPD_REQUIRE(path != nullptr && out != nullptr, "sapd_config_load: NULL argument");
  return guarded([&] { *out = new sapd_config{sapd::RunConfig::load(path)}; });
}

void sapd_config_destroy(sapd_config* config) { delete config; }

sapd_status sapd_config_set(sapd_config* config, const char* key, const char* value) {
  SAPD_REQUIRE(config && key && value, "sapd_config_set: NULL argument");
  return guarded([&] { config->config.set(key, value); });
}

sapd_status sapd_config_apply_override(sapd_config* config, const char* assignment) {
  SAPD_REQUIRE(config && assignment, "sapd_config_apply_override: NULL argument");
  return guarded([&] { config->config.apply_override(assignment); });
}

sapd_status sapd_config_validate(const sapd_config* config) {
  SAPD_REQUIRE(config, "sapd_config_validate: NULL config");
  return guarded([&] { (void)sapd::resolve(config->config); });
}

sapd_status sapd_config_get(const sapd_config* config, const char* key, char* buf,
                            size_t capacity, size_t* needed) {
  SAPD_REQUIRE(config && key, "sapd_config_get: NULL argument");
  return guarded([&] {
    const std::string& v = config->config.get(key);
    if (needed) *needed = v.size() + 1;
    if (!buf) return;
    if (capacity <= v.size()) {
      throw std::out_of_range("sapd_config_get: value of '" + std::string(key) + "' needs " +
                              std::to_string(v.size() + 1) + " bytes");
    }
    std::memcpy(buf, v.c_str(), v.size() + 1);
  });
}

sapd_status sapd_config_save(const sapd_config* config, const char* path) {
  SAPD_REQUIRE(config && path, "sapd_config_save: NULL argument");
  return guarded([&] { config->config.save(path); });
}

sapd_status sapd_generate_dataset(const sapd_config* config, const char* dir, int32_t count,
                                  uint64_t seed) {
  SAPD_REQUIRE(config && dir, "sapd_generate_dataset: NULL argument");
  SAPD_REQUIRE(count >= 1, "sapd_generate_dataset: count must be >= 1");
  return guarded([&] {
    const sapd::Settings s = sapd::resolve(config->config);
    sapd::write_dataset(dir, sapd::generate_scenes(count, seed, s.pyramid.image_width, s.data));
  });
}

sapd_status sapd_generate_default_datasets(const sapd_config* config, const char* dir) {
  SAPD_REQUIRE(config && dir, "sapd_generate_default_datasets: NULL argument");
  return guarded([&] {
    const sapd::Settings s = sapd::resolve(config->config);
    const std::filesystem::path root(dir);
    sapd::write_dataset(root / "train", sapd::generate_train_set(s));
    sapd::write_dataset(root / "test", sapd::generate_test_set(s));
  });
}

sapd_status sapd_train(const sapd_config* config, const char* data_dir, const char* run_dir,
                       sapd_progress_fn progress, void* user, sapd_model** out_model) {
  SAPD_REQUIRE(config && run_dir, "sapd_train: NULL argument");
  return guarded([&] {
    auto handle = std::make_unique<sapd_model>();
    handle->config = config->config;
    handle->settings = sapd::resolve(config->config);
    const sapd::Settings& s = handle->settings;
    const auto scenes = scenes_or(data_dir, sapd::generate_train_set, s);
    handle->model = std::make_unique<sapd::Model>(s);

    const std::filesystem::path dir(run_dir);
    std::filesystem::create_directories(dir);
    std::ofstream metrics(dir / "metrics.csv", std::ios::binary);
    if (!metrics) throw std::runtime_error("cannot write " + (dir / "metrics.csv").string());
    metrics << sapd::metrics_header() << '\n';
    const int total = sapd::iterations_per_epoch(scenes.size(), s.train.batch_size) * s.train.epochs;
    const int every = std::max(1, total / 20);
    sapd::train(*handle->model, scenes, s, s.seed, [&](const sapd::IterationRecord& r) {
      const std::string row = sapd::metrics_row(r);
      metrics << row << '\n';
      if (progress && (r.iteration % every == 0 || r.iteration + 1 == total)) {
        progress(user, ("iter " + std::to_string(r.iteration + 1) + "/" + std::to_string(total) +
                        " " + row).c_str());
      }
    });
    metrics.close();
    if (!metrics) throw std::runtime_error("write failed: " + (dir / "metrics.csv").string());
    handle->model->save(dir / "checkpoint.bin");
    if (out_model) *out_model = handle.release();
  });
}

sapd_status sapd_model_load(const sapd_config* config, const char* checkpoint, sapd_model** out) {
  SAPD_REQUIRE(config && checkpoint && out, "sapd_model_load: NULL argument");
  return guarded([&] {
    auto handle = std::make_unique<sapd_model>();
    handle->config = config->config;
    handle->settings = sapd::resolve(config->config);
    handle->model = std::make_unique<sapd::Model>(handle->settings);
    handle->model->load(checkpoint);
    *out = handle.release();
  });
}

sapd_status sapd_model_save(const sapd_model* model, const char* path) {
  SAPD_REQUIRE(model && path, "sapd_model_save: NULL argument");
  return guarded([&] { model->model->save(path); });
}

void sapd_model_destroy(sapd_model* model) { delete model; }

sapd_status sapd_infer_image(const sapd_model* model, const char* ppm_path, sapd_detections** out) {
  SAPD_REQUIRE(model && ppm_path && out, "sapd_infer_image: NULL argument");
  return guarded([&] {
    const sapd::RgbImage image = sapd::read_ppm(ppm_path);
    const sapd::PyramidSpec& p = model->settings.pyramid;
    if (image.width != p.image_width || image.height != p.image_height) {
      throw std::invalid_argument("image is " + std::to_string(image.width) + "x" +
                                  std::to_string(image.height) + ", model expects " +
                                  std::to_string(p.image_width) + "x" +
                                  std::to_string(p.image_height));
    }
    auto dets = std::make_unique<sapd_detections>();
    dets->items = sapd::infer(*model->model, image.to_tensor(), model->settings);
    *out = dets.release();
  });
}

size_t sapd_detections_count(const sapd_detections* detections) {
  return detections ? detections->items.size() : 0;
}

sapd_status sapd_detections_get(const sapd_detections* detections, size_t index,
                                sapd_detection* out) {
  SAPD_REQUIRE(detections && out, "sapd_detections_get: NULL argument");
  if (index >= detections->items.size()) {
    return fail(SAPD_ERR_OUT_OF_RANGE, "sapd_detections_get: index " + std::to_string(index) +
                                           " >= count " +
                                           std::to_string(detections->items.size()));
  }
  const sapd::Detection& d = detections->items[index];
  *out = {d.class_id, d.score, d.box.x1, d.box.y1, d.box.x2, d.box.y2, d.level};
  return SAPD_OK;
}

sapd_status sapd_detections_write(const sapd_detections* detections, const char* image_name,
                                  const char* path) {
  SAPD_REQUIRE(detections && image_name && path, "sapd_detections_write: NULL argument");
  return guarded([&] {
    const sapd::ImageDetections img{image_name, detections->items};
    sapd::write_detections(path, std::span<const sapd::ImageDetections>(&img, 1));
  });
}

void sapd_detections_destroy(sapd_detections* detections) { delete detections; }

sapd_status sapd_evaluate_model(const sapd_model* model, const char* data_dir, const char* run_dir,
                                sapd_metrics* out) {
  SAPD_REQUIRE(model && run_dir, "sapd_evaluate_model: NULL argument");
  return guarded([&] {
    const auto scenes = scenes_or(data_dir, sapd::generate_test_set, model->settings);
    const sapd::EvaluationRun run = sapd::evaluate_model(*model->model, scenes, model->settings);
    const std::filesystem::path dir(run_dir);
    std::filesystem::create_directories(dir);
    sapd::write_detections(dir / "detections.jsonl", run.detections);
    write_metrics_json(dir / "metrics.json", run.metrics);
    if (out) *out = to_c(run.metrics);
  });
}

sapd_status sapd_evaluate_detections(const sapd_config* config, const char* detections_path,
                                     const char* data_dir, sapd_metrics* out) {
  SAPD_REQUIRE(config && detections_path, "sapd_evaluate_detections: NULL argument");
  return guarded([&] {
    const sapd::Settings s = sapd::resolve(config->config);
    const auto scenes = scenes_or(data_dir, sapd::generate_test_set, s);
    const auto dets = sapd::read_detections(detections_path);
    const sapd::ApMetrics m = sapd::evaluate_detections(dets, scenes, s.data.num_classes);
    if (out) *out = to_c(m);
  });
}

sapd_status sapd_dump_weights(sapd_model* model, const char* data_dir, const char* run_dir) {
  SAPD_REQUIRE(model && run_dir, "sapd_dump_weights: NULL argument");
  return guarded([&] {
    const auto scenes = scenes_or(data_dir, sapd::generate_test_set, model->settings);
    const std::filesystem::path dir(run_dir);
    std::filesystem::create_directories(dir);
    sapd::dump_selection_weights(*model->model, scenes, model->settings,
                                 dir / "selection_weights.csv");
    sapd::dump_weight_maps(*model->model, scenes, model->settings, dir / "weight_maps");
  });
}

sapd_status sapd_ablation_size(const sapd_config* config, size_t* out) {
  SAPD_REQUIRE(config && out, "sapd_ablation_size: NULL argument");
  return guarded([&] { *out = sapd::resolve(config->config).ablation.size(); });
}

sapd_status sapd_ablate(const sapd_config* config, const char* train_dir, const char* test_dir,
                        const char* run_dir, sapd_progress_fn progress, void* user) {
  SAPD_REQUIRE(config && run_dir, "sapd_ablate: NULL argument");
  return guarded([&] {
    const sapd::Settings s = sapd::resolve(config->config);
    const auto train_set = scenes_or(train_dir, sapd::generate_train_set, s);
    const auto test_set = scenes_or(test_dir, sapd::generate_test_set, s);
    const std::filesystem::path dir(run_dir);
    std::filesystem::create_directories(dir);
    std::ofstream csv(dir / "ablation.csv", std::ios::binary);
    if (!csv) throw std::runtime_error("cannot write " + (dir / "ablation.csv").string());
    csv << sapd::ablation_header() << '\n';
    std::size_t done = 0;
    const std::size_t total = s.ablation.size();
    sapd::run_ablation(config->config, train_set, test_set, [&](const sapd::AblationRow& row) {
      const std::string line = sapd::ablation_row(row);
      csv << line << '\n' << std::flush;
      ++done;
      if (progress) {
        progress(user, (std::to_string(done) + "/" + std::to_string(total) + " " + line).c_str());
      }
    });
    if (!csv) throw std::runtime_error("write failed: " + (dir / "ablation.csv").string());
  });
}

}  // extern "C"
