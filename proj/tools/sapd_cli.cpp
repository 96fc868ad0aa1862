// SPDX-License-Identifier: Apache-2.0
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sapd/sapd.h"

namespace {

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> overrides;
};

struct Failure {
  std::string kind;
  std::string message;
};

std::string one_line(std::string s) {
  for (char& c : s) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return s;
}

void check(sapd_status status) {
  if (status != SAPD_OK) throw Failure{sapd_status_name(status), sapd_last_error()};
}

const char* or_null(const std::string& s) { return s.empty() ? nullptr : s.c_str(); }

void print_progress(void*, const char* line) { std::fprintf(stderr, "%s\n", line); }

// Owns a C handle and releases it with the matching destroy function.
template <typename T, void (*Destroy)(T*)>
struct Handle {
  T* ptr = nullptr;
  Handle() = default;
  Handle(const Handle&) = delete;
  Handle& operator=(const Handle&) = delete;
  ~Handle() { Destroy(ptr); }
};
using Config = Handle<sapd_config, sapd_config_destroy>;
using ModelHandle = Handle<sapd_model, sapd_model_destroy>;
using Detections = Handle<sapd_detections, sapd_detections_destroy>;

void add_common(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("--config", opts.config, "Config file (key = value lines)");
  cmd->add_option("--seed", opts.seed, "Run seed (overrides the seed key)");
  cmd->add_option("--out", opts.out, "Run directory (default runs/<subcommand>)");
  cmd->add_option("--set", opts.overrides, "Override a config key: --set key=value")
      ->take_all();
}

// Loads and overrides the config, creates the run directory and echoes the
// resolved config into it.
std::filesystem::path prepare_run(const std::string& name, const CommonOptions& opts,
                                  Config& config) {
  check(opts.config.empty() ? sapd_config_create(&config.ptr)
                            : sapd_config_load(opts.config.c_str(), &config.ptr));
  for (const std::string& o : opts.overrides) check(sapd_config_apply_override(config.ptr, o.c_str()));
  if (opts.seed) check(sapd_config_set(config.ptr, "seed", std::to_string(*opts.seed).c_str()));
  check(sapd_config_validate(config.ptr));
  const std::filesystem::path dir = opts.out.empty() ? std::filesystem::path("runs") / name
                                                     : std::filesystem::path(opts.out);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Failure{"io", "cannot create run directory " + dir.string() + ": " + ec.message()};
  check(sapd_config_save(config.ptr, (dir / "config.txt").c_str()));
  return dir;
}

void print_metrics(const sapd_metrics& m) {
  std::printf("AP=%.4f AP50=%.4f AP75=%.4f\n", m.ap, m.ap50, m.ap75);
}

// The library writes metrics.json when it runs the model; scoring a file only returns numbers.
void write_metrics(const std::filesystem::path& path, const sapd_metrics& m) {
  std::ofstream out(path);
  char buf[160];
  std::snprintf(buf, sizeof buf, "{\n  \"ap\": %.17g,\n  \"ap50\": %.17g,\n  \"ap75\": %.17g\n}\n", m.ap,
                m.ap50, m.ap75);
  out << buf;
  if (!out) throw Failure{"io", "cannot write " + path.string()};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Soft anchor-point detector: data generation, training, evaluation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(sapd_version()));

  CommonOptions opts;
  std::string data_dir, test_dir, checkpoint, image, detections;
  std::optional<int> count;

  auto* gen = app.add_subcommand("gen-data", "Write synthetic train/ and test/ datasets");
  add_common(gen, opts);
  gen->add_option("--count", count, "Write a single dataset of this many scenes to <out>/data")
      ->check(CLI::PositiveNumber);

  auto* train = app.add_subcommand("train", "Train; writes metrics.csv and checkpoint.bin");
  add_common(train, opts);
  train->add_option("--data", data_dir, "Training dataset directory (default: generated)");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint or a detections file");
  add_common(eval, opts);
  eval->add_option("--data", data_dir, "Held-out dataset directory (default: generated)");
  auto* eval_ckpt = eval->add_option("--checkpoint", checkpoint, "Model checkpoint");
  auto* eval_dets = eval->add_option("--detections", detections, "Detections JSON lines");
  eval_ckpt->excludes(eval_dets);

  auto* inf = app.add_subcommand("infer", "Detect objects in one PPM image");
  add_common(inf, opts);
  inf->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
  inf->add_option("--image", image, "Input image (binary PPM)")->required();

  auto* dump = app.add_subcommand("dump-weights", "Dump selection weights and anchor weight maps");
  add_common(dump, opts);
  dump->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
  dump->add_option("--data", data_dir, "Dataset directory (default: generated test set)");

  auto* ablate = app.add_subcommand("ablate", "Train and evaluate every ablation configuration");
  add_common(ablate, opts);
  ablate->add_option("--data", data_dir, "Training dataset directory (default: generated)");
  ablate->add_option("--test-data", test_dir, "Held-out dataset directory (default: generated)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "error: usage: %s\n", one_line(e.what()).c_str());
    return 2;
  }

  try {
    Config config;
    CLI::App* cmd = app.get_subcommands().front();
    const std::filesystem::path dir = prepare_run(cmd->get_name(), opts, config);

    if (cmd == gen) {
      if (count) {
        std::uint64_t seed = 0;
        char buf[32];
        std::size_t needed = 0;
        check(sapd_config_get(config.ptr, "seed", buf, sizeof buf, &needed));
        seed = std::stoull(buf);
        check(sapd_generate_dataset(config.ptr, (dir / "data").c_str(), *count, seed));
      } else {
        check(sapd_generate_default_datasets(config.ptr, dir.c_str()));
      }
    } else if (cmd == train) {
      ModelHandle model;
      check(sapd_train(config.ptr, or_null(data_dir), dir.c_str(), print_progress, nullptr,
                       &model.ptr));
    } else if (cmd == eval) {
      sapd_metrics m{};
      if (!detections.empty()) {
        check(sapd_evaluate_detections(config.ptr, detections.c_str(), or_null(data_dir), &m));
        write_metrics(dir / "metrics.json", m);
      } else {
        if (checkpoint.empty()) {
          throw Failure{"invalid_argument", "eval needs --checkpoint or --detections"};
        }
        ModelHandle model;
        check(sapd_model_load(config.ptr, checkpoint.c_str(), &model.ptr));
        check(sapd_evaluate_model(model.ptr, or_null(data_dir), dir.c_str(), &m));
      }
      print_metrics(m);
    } else if (cmd == inf) {
      ModelHandle model;
      check(sapd_model_load(config.ptr, checkpoint.c_str(), &model.ptr));
      Detections dets;
      check(sapd_infer_image(model.ptr, image.c_str(), &dets.ptr));
      const std::filesystem::path out = dir / "detections.jsonl";
      std::filesystem::remove(out);
      check(sapd_detections_write(dets.ptr, std::filesystem::path(image).filename().c_str(),
                                  out.c_str()));
      for (std::size_t i = 0; i < sapd_detections_count(dets.ptr); ++i) {
        sapd_detection d{};
        check(sapd_detections_get(dets.ptr, i, &d));
        std::printf("class=%d score=%.4f box=%.1f,%.1f,%.1f,%.1f level=P%d\n", d.class_id,
                    static_cast<double>(d.score), static_cast<double>(d.x1),
                    static_cast<double>(d.y1), static_cast<double>(d.x2),
                    static_cast<double>(d.y2), d.level);
      }
    } else if (cmd == dump) {
      ModelHandle model;
      check(sapd_model_load(config.ptr, checkpoint.c_str(), &model.ptr));
      check(sapd_dump_weights(model.ptr, or_null(data_dir), dir.c_str()));
    } else if (cmd == ablate) {
      std::size_t n = 0;
      check(sapd_ablation_size(config.ptr, &n));
      std::fprintf(stderr, "ablation grid: %zu configurations\n", n);
      check(sapd_ablate(config.ptr, or_null(data_dir), or_null(test_dir), dir.c_str(),
                        print_progress, nullptr));
    }
    std::printf("run directory: %s\n", dir.c_str());
    return 0;
  } catch (const Failure& f) {
    std::fprintf(stderr, "error: %s: %s\n", f.kind.c_str(), one_line(f.message).c_str());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: internal: %s\n", one_line(e.what()).c_str());
    return 1;
  }
}
