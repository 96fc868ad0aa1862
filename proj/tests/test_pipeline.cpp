// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "sapd/experiment.hpp"
#include "sapd/finite_difference.hpp"
#include "sapd/rng.hpp"
#include "oracles.hpp"

namespace sapd {
namespace {

using testing::baseline_loss;
using testing::brute_force_nms;
using testing::OracleBatch;
using testing::random_detections;

namespace fs = std::filesystem;

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("sapd_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// A tiny but complete configuration: 32 px images, levels P2..P4.
Settings tiny_settings() {
  RunConfig c;
  for (const char* o : {"data.image_size=32", "pyramid.min_level=2", "pyramid.max_level=4",
                        "data.min_size=20", "data.max_size=28", "data.max_instances=3",
                        "data.train_count=16", "data.test_count=4", "model.stem_width=4",
                        "model.width=4", "model.head_convs=1", "selection.width=4",
                        "train.epochs=2", "train.phase_switch_epoch=1", "train.batch_size=4",
                        "train.warmup_iters=2", "selection.top_k=2", "ablate.k=1,2,3"}) {
    c.apply_override(o);
  }
  return resolve(c);
}

// ---- dataset ------------------------------------------------------------

TEST(Dataset, SameSeedGivesByteIdenticalFiles) {
  const DataSettings d;
  const fs::path a = scratch_dir("ds_a"), b = scratch_dir("ds_b");
  write_dataset(a, generate_scenes(5, 99, 64, d));
  write_dataset(b, generate_scenes(5, 99, 64, d));
  for (const auto& entry : fs::directory_iterator(a)) {
    EXPECT_EQ(slurp(entry.path()), slurp(b / entry.path().filename())) << entry.path();
  }
}

TEST(Dataset, HundredScenesWithinBounds) {
  const DataSettings d;
  const fs::path dir = scratch_dir("ds_100");
  write_dataset(dir, generate_scenes(100, 5, 64, d));
  const auto scenes = load_dataset(dir);
  ASSERT_EQ(scenes.size(), 100u);
  for (const Scene& s : scenes) {
    EXPECT_EQ(s.image.width, 64);
    EXPECT_GE(s.boxes.size(), 1u);
    EXPECT_LE(s.boxes.size(), 8u);
    for (const GroundTruthBox& b : s.boxes) {
      const CornerBox c = to_corners(b);
      EXPECT_GE(c.x1, 0.0f);
      EXPECT_GE(c.y1, 0.0f);
      EXPECT_LE(c.x2, 64.0f);
      EXPECT_LE(c.y2, 64.0f);
      EXPECT_GE(b.class_id, 1);
      EXPECT_LE(b.class_id, 3);
    }
  }
}

TEST(Dataset, LoadReproducesGeneratedScenes) {
  const DataSettings d;
  const auto scenes = generate_scenes(10, 17, 64, d);
  const fs::path dir = scratch_dir("ds_rt");
  write_dataset(dir, scenes);
  const auto loaded = load_dataset(dir);
  ASSERT_EQ(loaded.size(), scenes.size());
  for (std::size_t k = 0; k < scenes.size(); ++k) {
    EXPECT_EQ(loaded[k].name, scenes[k].name);
    EXPECT_EQ(loaded[k].boxes, scenes[k].boxes);
    EXPECT_EQ(loaded[k].image.pixels, scenes[k].image.pixels);
  }
}

TEST(Dataset, BoxesCoverTheirShapes) {
  const DataSettings d;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    SceneMasks masks;
    const Scene s = generate_scene(seed, 64, d, &masks);
    ASSERT_EQ(masks.masks.size(), s.boxes.size());
    for (std::size_t k = 0; k < s.boxes.size(); ++k) {
      const CornerBox box = to_corners(s.boxes[k]);
      std::size_t painted = 0, covered = 0;
      for (int y = 0; y < 64; ++y) {
        for (int x = 0; x < 64; ++x) {
          if (!masks.masks[k][static_cast<std::size_t>(y * 64 + x)]) continue;
          ++painted;
          const float px = static_cast<float>(x) + 0.5f, py = static_cast<float>(y) + 0.5f;
          covered += (px >= box.x1 && px <= box.x2 && py >= box.y1 && py <= box.y2) ? 1 : 0;
        }
      }
      ASSERT_GT(painted, 0u);
      EXPECT_GE(static_cast<double>(covered) / static_cast<double>(painted), 0.95);
    }
  }
}

TEST(Dataset, InstanceSizesSpanSeveralLevels) {
  const DataSettings d;
  float smallest = 1e9f, largest = 0.0f;
  for (const Scene& s : generate_scenes(200, 3, 64, d)) {
    for (const GroundTruthBox& b : s.boxes) {
      smallest = std::min(smallest, std::max(b.w, b.h));
      largest = std::max(largest, std::max(b.w, b.h));
    }
  }
  EXPECT_LT(smallest, 24.0f);
  EXPECT_GT(largest, 40.0f);
}

TEST(Dataset, PpmRoundTripAndFlip) {
  const Scene s = generate_scene(4, 64, DataSettings{});
  const fs::path p = scratch_dir("ppm") / "x.ppm";
  write_ppm(p, s.image);
  const RgbImage back = read_ppm(p);
  EXPECT_EQ(back.pixels, s.image.pixels);
  EXPECT_EQ(s.image.flipped().flipped().pixels, s.image.pixels);
  const auto flipped = flip_boxes(s.boxes, 64.0f);
  for (std::size_t k = 0; k < s.boxes.size(); ++k) {
    EXPECT_FLOAT_EQ(flipped[k].cx, 64.0f - s.boxes[k].cx);
    EXPECT_EQ(flipped[k].w, s.boxes[k].w);
  }
  const Tensor t = s.image.to_tensor();
  EXPECT_FLOAT_EQ(t.at(1, 3, 5), static_cast<float>(s.image.pixels[(3 * 64 + 5) * 3 + 1]) / 255.0f);
}

TEST(Dataset, RejectsMalformedInput) {
  const fs::path dir = scratch_dir("bad");
  EXPECT_THROW(load_dataset(dir), std::runtime_error);
  std::ofstream(dir / "x.ppm") << "P3\n1 1\n255\n0 0 0\n";
  EXPECT_THROW(read_ppm(dir / "x.ppm"), std::runtime_error);
  std::ofstream(dir / kAnnotationFile) << "{\"image\": 3}\n";
  EXPECT_THROW(load_dataset(dir), std::runtime_error);
}

// ---- targets ------------------------------------------------------------

TEST(Targets, SingleAssignmentMatchesLatticeScan) {
  const PyramidSpec p{2, 5, 64, 64};
  const SoftWeightConfig w;
  SplitMix64 rng(44);
  for (int n = 0; n < 100; ++n) {
    const GroundTruthBox box{1, static_cast<float>(rng.uniform(12, 52)),
                             static_cast<float>(rng.uniform(12, 52)),
                             static_cast<float>(rng.uniform(16, 40)),
                             static_cast<float>(rng.uniform(16, 40))};
    const int level_index = static_cast<int>(rng.below(4));
    const std::vector<std::vector<LevelAssignment>> assign{{{level_index, std::nullopt}}};
    const TargetMaps maps = build_targets(std::span(&box, 1), assign, p, w, 4.0f);
    const int level = p.level_at(level_index);
    const float s = static_cast<float>(1 << level);
    std::size_t expected = 0;
    for (int j = 0; j < p.grid_height(level); ++j) {
      for (int i = 0; i < p.grid_width(level); ++i) {
        const float x = s * (static_cast<float>(i) + 0.5f), y = s * (static_cast<float>(j) + 0.5f);
        expected += (std::fabs(x - box.cx) <= 0.1f * box.w && std::fabs(y - box.cy) <= 0.1f * box.h) ? 1 : 0;
      }
    }
    EXPECT_EQ(maps.num_positives(), expected);
  }
}

TEST(Targets, NoInstancesMeansBackground) {
  const PyramidSpec p{2, 5, 64, 64};
  const TargetMaps maps = build_targets({}, {}, p, SoftWeightConfig{}, 4.0f);
  EXPECT_EQ(maps.num_positives(), 0u);
  for (const LevelTargets& t : maps.levels) {
    for (float w : t.weight) EXPECT_EQ(w, 1.0f);
    for (int c : t.cls) EXPECT_EQ(c, 0);
  }
}

TEST(Targets, PositivesOnlyOnAssignedLevels) {
  const PyramidSpec p{2, 5, 64, 64};
  const SoftWeightConfig w{1.0f, 1.0f};
  const GroundTruthBox box{2, 32, 32, 60, 60};
  const std::vector<std::vector<LevelAssignment>> assign{{{0, 0.5f}, {2, 0.2f}, {3, 0.1f}}};
  const TargetMaps maps = build_targets(std::span(&box, 1), assign, p, w, 4.0f);
  for (int l = 0; l < 4; ++l) {
    const auto& t = maps.levels[static_cast<std::size_t>(l)];
    const bool any = std::any_of(t.instance.begin(), t.instance.end(), [](int v) { return v >= 0; });
    EXPECT_EQ(any, l != 1) << "level index " << l;
    for (std::size_t a = 0; a < t.weight.size(); ++a) {
      if (t.instance[a] >= 0) {
        EXPECT_LE(t.weight[a], l == 0 ? 0.5f : (l == 2 ? 0.2f : 0.1f));
      }
    }
  }
}

TEST(Targets, DecodedTargetsReproduceTheirBoxes) {
  const Settings s = tiny_settings();
  for (const Scene& scene : generate_scenes(20, 8, 32, s.data)) {
    std::vector<std::vector<LevelAssignment>> assign;
    for (std::size_t b = 0; b < scene.boxes.size(); ++b) assign.push_back({{0, 1.0f}, {1, 1.0f}, {2, 1.0f}});
    const TargetMaps maps = build_targets(scene.boxes, assign, s.pyramid, s.weighting, s.z);
    for (int l = 0; l < 3; ++l) {
      const auto& t = maps.levels[static_cast<std::size_t>(l)];
      for (int j = 0; j < t.grid_height; ++j) {
        for (int i = 0; i < t.grid_width; ++i) {
          const std::size_t a = t.index(i, j);
          if (t.instance[a] < 0) continue;
          const CornerBox back = decode_box({s.pyramid.level_at(l), i, j}, t.loc[a], s.z);
          const CornerBox want = to_corners(scene.boxes[static_cast<std::size_t>(t.instance[a])]);
          EXPECT_NEAR(back.x1, want.x1, 1e-4f);
          EXPECT_NEAR(back.y2, want.y2, 1e-4f);
          EXPECT_EQ(t.cls[a], scene.boxes[static_cast<std::size_t>(t.instance[a])].class_id);
        }
      }
    }
  }
}

TEST(Targets, OverlapGoesToSmallerInstanceThenClassThenIndex) {
  const PyramidSpec p{2, 5, 64, 64};
  const SoftWeightConfig w{1.0f, 1.0f};
  const std::vector<GroundTruthBox> boxes{{3, 30, 30, 40, 40}, {1, 30, 30, 20, 20}};
  const std::vector<std::vector<LevelAssignment>> assign{{{0, std::nullopt}}, {{0, std::nullopt}}};
  const TargetMaps maps = build_targets(boxes, assign, p, w, 4.0f);
  const auto& t = maps.levels[0];
  EXPECT_EQ(t.instance[t.index(7, 7)], 1);
  EXPECT_EQ(t.instance[t.index(3, 3)], 0);

  const std::vector<GroundTruthBox> same{{2, 30, 30, 20, 20}, {1, 30, 30, 20, 20}, {1, 30, 30, 20, 20}};
  const std::vector<std::vector<LevelAssignment>> assign3(3, {{0, std::nullopt}});
  const TargetMaps maps3 = build_targets(same, assign3, p, w, 4.0f);
  EXPECT_EQ(maps3.levels[0].instance[maps3.levels[0].index(7, 7)], 1);
}

// ---- training -----------------------------------------------------------

TEST(RunBatch, HardPhaseAssignsEachInstanceToItsMinLossLevel) {
  const Settings s = tiny_settings();
  Model model(s);
  model.initialize(3);
  OracleBatch batch(s, 21, 4);
  const BatchResult r = run_batch(model, batch.samples, TrainPhase::hard, s, false);
  EXPECT_EQ(r.skipped_instances, 0u);
  for (const auto& image : r.routing) {
    for (const InstanceRouting& inst : image) {
      ASSERT_TRUE(inst.min_loss_level);
      ASSERT_EQ(inst.assignment.size(), 1u);
      EXPECT_EQ(inst.assignment[0].level_index, *inst.min_loss_level);
      EXPECT_FALSE(inst.assignment[0].weight);
    }
  }
  EXPECT_GT(r.loss.num_positives, 0u);
}

TEST(RunBatch, SoftPhaseUsesTopKWithSelectionWeights) {
  const Settings s = tiny_settings();
  Model model(s);
  model.initialize(3);
  OracleBatch batch(s, 22, 4);
  const BatchResult r = run_batch(model, batch.samples, TrainPhase::soft, s, false);
  for (const auto& image : r.routing) {
    for (const InstanceRouting& inst : image) {
      ASSERT_EQ(inst.level_weights.size(), 3u);
      EXPECT_LE(inst.assignment.size(), 2u);
      EXPECT_EQ(inst.assignment[0].level_index, *inst.min_loss_level);
      for (const LevelAssignment& a : inst.assignment) {
        EXPECT_EQ(*a.weight, inst.level_weights[static_cast<std::size_t>(a.level_index)]);
      }
    }
  }
  EXPECT_GT(r.loss.select_net, 0.0);
}

TEST(RunBatch, BaselineModeMatchesUnweightedLoss) {
  Settings s = tiny_settings();
  s.weighting.mode = WeightMode::off;
  s.selection.top_k = 1;
  s.selection.lambda = 0.0f;
  Model model(s);
  model.initialize(5);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    OracleBatch batch(s, 300 + seed, 3);
    for (TrainPhase phase : {TrainPhase::hard, TrainPhase::soft}) {
      const BatchResult r = run_batch(model, batch.samples, phase, s, false);
      EXPECT_EQ(r.loss.total, baseline_loss(model, batch, s, r));
    }
  }
}

TEST(RunBatch, EtaIsIrrelevantWhenWeightingIsOff) {
  Settings a = tiny_settings();
  a.weighting.mode = WeightMode::off;
  Settings b = a;
  b.weighting.eta = 3.0f;
  Model model(a);
  model.initialize(6);
  OracleBatch batch(a, 31, 4);
  for (TrainPhase phase : {TrainPhase::hard, TrainPhase::soft}) {
    EXPECT_EQ(run_batch(model, batch.samples, phase, a, false).loss.total,
              run_batch(model, batch.samples, phase, b, false).loss.total);
  }
}

// Finite differences on a handful of coordinates of each parameter tensor whose name starts
// with one of the prefixes.
double gradient_error(Model& model, const OracleBatch& batch, const Settings& s, TrainPhase phase,
                      std::initializer_list<std::string_view> prefixes) {
  const auto params = model.parameters();
  SgdOptimizer::zero_grad(params);
  run_batch(model, batch.samples, phase, s, true);
  std::vector<double> analytic, numeric;
  SplitMix64 rng(9);
  for (Parameter* p : params) {
    if (std::none_of(prefixes.begin(), prefixes.end(), [&](auto pre) { return p->name.starts_with(pre); })) continue;
    for (int n = 0; n < 3; ++n) {
      const std::size_t k = rng.below(p->value.size());
      analytic.push_back(p->grad[k]);
      const auto fd = central_difference(std::span<float>(p->value.data() + k, 1), 3e-3f, [&] {
        return run_batch(model, batch.samples, phase, s, false).loss.total;
      });
      numeric.push_back(fd[0]);
    }
  }
  return relative_error(numeric, analytic);
}

TEST(RunBatch, GradientsMatchFiniteDifferences) {
  Settings s = tiny_settings();
  s.train.flip = false;
  Model model(s);
  model.initialize(7);
  for (Parameter* p : model.parameters()) {
    for (float& v : p->value.values()) v *= 3.0f;  // lift activations off the prior init
  }
  OracleBatch batch(s, 41, 2);
  // Selection weights are constants to the detection loss, and uncoupled features are constants
  // to the selection loss; only parameters without such a path are compared.
  EXPECT_LT(gradient_error(model, batch, s, TrainPhase::hard, {"cls_head", "loc_head", "select"}), 2e-2);
  EXPECT_LT(gradient_error(model, batch, s, TrainPhase::soft, {"cls_head", "loc_head"}), 2e-2);
  s.selection.couple_features = true;
  EXPECT_LT(gradient_error(model, batch, s, TrainPhase::hard, {""}), 2e-2);
}

TEST(RunBatch, SelectionGradientStaysOutOfTheDetectorUnlessCoupled) {
  Settings s = tiny_settings();
  s.selection.lambda = 1.0f;
  Model model(s);
  model.initialize(8);
  OracleBatch batch(s, 51, 2);
  auto detector_grads = [&](float lambda) {
    s.selection.lambda = lambda;
    SgdOptimizer::zero_grad(model.parameters());
    run_batch(model, batch.samples, TrainPhase::hard, s, true);
    std::vector<float> g;
    for (const Parameter* p : model.detector.parameters()) g.insert(g.end(), p->grad.values().begin(), p->grad.values().end());
    return g;
  };
  EXPECT_EQ(detector_grads(0.0f), detector_grads(5.0f));
  s.selection.couple_features = true;
  EXPECT_NE(detector_grads(0.0f), detector_grads(5.0f));
}

TEST(Train, ZeroLearningRateLeavesParametersUnchanged) {
  Settings s = tiny_settings();
  s.train.learning_rate = 0.0f;
  s.train.epochs = 1;
  s.train.phase_switch_epoch = 1;
  const auto scenes = generate_train_set(s);
  Model reference(s);
  reference.initialize(12);
  Model model(s);
  train(model, scenes, s, 12);
  const auto a = reference.parameters();
  const auto b = model.parameters();
  for (std::size_t k = 0; k < a.size(); ++k) EXPECT_EQ(a[k]->value, b[k]->value) << a[k]->name;
}

TEST(Train, PhaseFlipsAtConfiguredEpochAndRunsAreReproducible) {
  Settings s = tiny_settings();
  s.train.epochs = 3;
  s.train.phase_switch_epoch = 2;
  const auto scenes = generate_train_set(s);
  Model a(s), b(s);
  const auto ra = train(a, scenes, s, 4);
  const auto rb = train(b, scenes, s, 4);
  const int per_epoch = iterations_per_epoch(scenes.size(), s.train.batch_size);
  ASSERT_EQ(ra.size(), static_cast<std::size_t>(3 * per_epoch));
  for (const IterationRecord& r : ra) {
    EXPECT_EQ(r.phase, r.iteration < 2 * per_epoch ? TrainPhase::hard : TrainPhase::soft);
  }
  for (std::size_t k = 0; k < ra.size(); ++k) EXPECT_EQ(metrics_row(ra[k]), metrics_row(rb[k]));
  const fs::path dir = scratch_dir("ckpt");
  a.save(dir / "a.bin");
  b.save(dir / "b.bin");
  EXPECT_EQ(slurp(dir / "a.bin"), slurp(dir / "b.bin"));
}

TEST(Train, DivergenceGuardAborts) {
  Settings s = tiny_settings();
  s.train.learning_rate = 1e6f;
  s.train.warmup_iters = 0;
  s.train.divergence_factor = 2.0;
  const auto scenes = generate_train_set(s);
  Model model(s);
  EXPECT_THROW(train(model, scenes, s, 1), TrainingDiverged);
}

TEST(Train, LearningRateSchedule) {
  TrainSettings t;
  t.learning_rate = 0.3f;
  t.warmup_iters = 10;
  t.lr_drops = {0.5, 0.75};
  t.lr_gamma = 0.1f;
  EXPECT_FLOAT_EQ(scheduled_learning_rate(t, 0, 100), 0.1f);
  EXPECT_FLOAT_EQ(scheduled_learning_rate(t, 10, 100), 0.3f);
  EXPECT_FLOAT_EQ(scheduled_learning_rate(t, 50, 100), 0.03f);
  EXPECT_FLOAT_EQ(scheduled_learning_rate(t, 80, 100), 0.003f);
}

TEST(Checkpoint, RoundTripAndShapeMismatch) {
  const Settings s = tiny_settings();
  Model a(s);
  a.initialize(1);
  const fs::path dir = scratch_dir("ckpt_rt");
  a.save(dir / "m.bin");
  Model b(s);
  b.load(dir / "m.bin");
  for (std::size_t k = 0; k < a.parameters().size(); ++k) {
    EXPECT_EQ(a.parameters()[k]->value, b.parameters()[k]->value);
  }
  Settings wide = s;
  wide.model.width = 8;
  Model c(wide);
  EXPECT_THROW(c.load(dir / "m.bin"), std::runtime_error);
}

TEST(Metrics, CsvColumns) {
  EXPECT_EQ(metrics_header(), "iter,total,cls,loc,select,pos_weight_sum,phase,lr");
  IterationRecord r;
  r.iteration = 3;
  r.loss.total = 1.5;
  r.loss.cls_sum = 1.0;
  r.loss.loc_sum = 2.0;
  r.loss.positive_weight_sum = 2.0;
  r.phase = TrainPhase::soft;
  r.learning_rate = 0.01f;
  EXPECT_EQ(metrics_row(r), "3,1.5,0.5,1,0,2,2,0.00999999978");
}

// ---- inference ----------------------------------------------------------

TEST(Nms, IdenticalBoxesKeepTheHigherScore) {
  const std::vector<Detection> d{{1, 0.8f, {0, 0, 10, 10}, 2}, {1, 0.9f, {0, 0, 10, 10}, 2}};
  EXPECT_EQ(nms(d, 0.5f), (std::vector<std::size_t>{1}));
  const std::vector<Detection> other_class{{1, 0.8f, {0, 0, 10, 10}, 2}, {2, 0.9f, {0, 0, 10, 10}, 2}};
  EXPECT_EQ(nms(other_class, 0.5f), (std::vector<std::size_t>{1, 0}));
}

TEST(Nms, MatchesBruteForceOracle) {
  SplitMix64 rng(1234);
  for (int trial = 0; trial < 20; ++trial) {
    const auto d = random_detections(rng, 1000);
    EXPECT_EQ(nms(d, 0.5f), brute_force_nms(d, 0.5f));
  }
}

TEST(Inference, DecodeLevelThresholdsAndCaps) {
  InferSettings cfg;
  cfg.top_n = 5;
  const PyramidSpec p{2, 5, 64, 64};
  LevelOutputs out{Tensor({2, 16, 16}, -10.0f), Tensor({4, 16, 16}, 0.0f)};
  for (std::size_t k = 0; k < 8; ++k) out.cls_logits[k] = static_cast<float>(k) - 3.0f;  // sigmoid(-3) < 0.05
  const auto dets = decode_level(out, 2, 4.0f, p, cfg);
  ASSERT_EQ(dets.size(), 5u);
  EXPECT_NEAR(dets[0].score, 1.0f / (1.0f + std::exp(-4.0f)), 1e-6f);
  for (std::size_t k = 1; k < dets.size(); ++k) EXPECT_LE(dets[k].score, dets[k - 1].score);
  // Anchor (7, 0) on P2 with unit distances spans 16 px around x = 30.
  EXPECT_EQ(dets[0].box, (CornerBox{14.0f, 0.0f, 46.0f, 18.0f}));
  EXPECT_EQ(dets[0].class_id, 1);
}

TEST(Inference, InitialModelDetectsNothing) {
  const Settings s = tiny_settings();
  Model model(s);
  model.initialize(2);
  const Scene scene = generate_scene(3, 32, s.data);
  EXPECT_TRUE(infer(model, scene.image.to_tensor(), s).empty());
}

TEST(Inference, OutputSortedWithoutSameClassOverlap) {
  const Settings s = tiny_settings();
  Model model(s);
  model.initialize(2);
  // Push every classification bias up so that many candidates survive.
  for (Parameter* p : model.parameters()) {
    if (p->name.find("cls") != std::string::npos && p->name.find("bias") != std::string::npos) p->value.fill(2.0f);
  }
  const Scene scene = generate_scene(3, 32, s.data);
  const auto dets = infer(model, scene.image.to_tensor(), s);
  ASSERT_FALSE(dets.empty());
  for (std::size_t k = 0; k < dets.size(); ++k) {
    if (k > 0) {
      EXPECT_LE(dets[k].score, dets[k - 1].score);
    }
    EXPECT_GT(dets[k].score, s.infer.score_threshold);
    EXPECT_GE(dets[k].box.x1, 0.0f);
    EXPECT_LE(dets[k].box.x2, 32.0f);
    for (std::size_t m = k + 1; m < dets.size(); ++m) {
      if (dets[k].class_id == dets[m].class_id) {
        EXPECT_LE(iou(dets[k].box, dets[m].box), s.infer.nms_threshold);
      }
    }
  }
}

TEST(Inference, DetectionsFileRoundTrip) {
  const std::vector<ImageDetections> imgs{{"a.ppm", {{1, 0.5f, {1, 2, 3, 4}, 3}}}, {"b.ppm", {}}};
  const fs::path p = scratch_dir("dets") / "d.jsonl";
  write_detections(p, imgs);
  const auto back = read_detections(p);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].image, "a.ppm");
  EXPECT_EQ(back[0].detections[0].box, (CornerBox{1, 2, 3, 4}));
  EXPECT_EQ(back[0].detections[0].level, 3);
  EXPECT_TRUE(back[1].detections.empty());
}

// ---- evaluation ---------------------------------------------------------

Detection det_from(const GroundTruthBox& g, float score) { return {g.class_id, score, to_corners(g), 2}; }

TEST(Evaluate, PerfectDetectionsScoreOne) {
  const auto scenes = generate_scenes(20, 2, 64, DataSettings{});
  std::vector<std::vector<Detection>> dets;
  std::vector<std::vector<GroundTruthBox>> gts;
  for (const Scene& s : scenes) {
    gts.push_back(s.boxes);
    dets.emplace_back();
    for (const GroundTruthBox& b : s.boxes) dets.back().push_back(det_from(b, 0.9f));
  }
  const ApMetrics m = evaluate(dets, gts, 3);
  EXPECT_EQ(m.ap, 1.0);
  EXPECT_EQ(m.ap50, 1.0);
  EXPECT_EQ(m.ap75, 1.0);
  for (double v : m.per_threshold) EXPECT_EQ(v, 1.0);
}

TEST(Evaluate, NoDetectionsScoreZero) {
  const std::vector<std::vector<GroundTruthBox>> gts{{{1, 10, 10, 8, 8}}};
  const std::vector<std::vector<Detection>> dets(1);
  EXPECT_EQ(evaluate(dets, gts, 3).ap, 0.0);
}

TEST(Evaluate, HandWalkedMatching) {
  // GT (0,0)-(10,10); a box shifted to IoU 0.6 and one at IoU 0.4.
  const std::vector<std::vector<GroundTruthBox>> gts{{{1, 5, 5, 10, 10}}};
  const CornerBox at06{0.0f, 0.0f, 10.0f, 6.0f};  // inter 60, union 100
  const CornerBox at04{0.0f, 0.0f, 4.0f, 10.0f};  // inter 40, union 100
  ASSERT_NEAR(iou(at06, to_corners(gts[0][0])), 0.6f, 1e-6f);
  ASSERT_NEAR(iou(at04, to_corners(gts[0][0])), 0.4f, 1e-6f);
  const std::vector<std::vector<Detection>> dets{{{1, 0.9f, at06, 2}, {1, 0.8f, at04, 2}}};
  const ApMetrics m = evaluate(dets, gts, 1);
  EXPECT_EQ(m.ap50, 1.0);
  EXPECT_EQ(m.ap75, 0.0);
}

TEST(Evaluate, InterpolatedPrecisionEnvelope) {
  // TP, FP, TP with 2 ground truths: recall 0.5 at precision 1, recall 1 at 2/3.
  const std::vector<bool> tp{true, false, true};
  const double expected = (51 * 1.0 + 50 * (2.0 / 3.0)) / 101.0;
  EXPECT_NEAR(interpolated_ap(tp, 2), expected, 1e-12);
  EXPECT_EQ(interpolated_ap(tp, 0), 0.0);
}

TEST(Evaluate, LowerScoredDuplicateIsAFalsePositive) {
  const std::vector<std::vector<GroundTruthBox>> gts{{{1, 5, 5, 10, 10}}};
  const std::vector<std::vector<Detection>> dets{{{1, 0.5f, {0, 0, 10, 10}, 2}, {1, 0.9f, {0, 0, 10, 10}, 2}}};
  const ApMetrics m = evaluate(dets, gts, 1);
  EXPECT_EQ(m.ap50, 1.0);  // precision stays 1 up to full recall
  const std::vector<std::vector<Detection>> wrong_first{{{1, 0.9f, {50, 50, 60, 60}, 2}, {1, 0.5f, {0, 0, 10, 10}, 2}}};
  EXPECT_NEAR(evaluate(wrong_first, gts, 1).ap50, 0.5, 1e-12);
}

TEST(Evaluate, ClassesWithoutGroundTruthAreIgnored) {
  const std::vector<std::vector<GroundTruthBox>> gts{{{2, 5, 5, 10, 10}}};
  const std::vector<std::vector<Detection>> dets{{{2, 0.9f, {0, 0, 10, 10}, 2}, {3, 0.9f, {20, 20, 30, 30}, 2}}};
  EXPECT_EQ(evaluate(dets, gts, 3).ap, 1.0);
}

// ---- dumps --------------------------------------------------------------

TEST(Dumps, SelectionWeightsAndWeightMaps) {
  Settings s = tiny_settings();
  s.dump_max_images = 3;
  Model model(s);
  model.initialize(1);
  const auto scenes = generate_test_set(s);
  const fs::path dir = scratch_dir("dump");
  dump_selection_weights(model, scenes, s, dir / "w.csv");
  std::ifstream in(dir / "w.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "image,instance,P2,P3,P4");
  std::size_t rows = 0;
  std::string line;
  while (std::getline(in, line)) {
    ++rows;
    std::stringstream ss(line);
    std::string field;
    std::getline(ss, field, ',');
    std::getline(ss, field, ',');
    double sum = 0.0;
    while (std::getline(ss, field, ',')) sum += std::stod(field);
    EXPECT_NEAR(sum, 1.0, 1e-5);
  }
  std::size_t instances = 0;
  for (std::size_t k = 0; k < 3; ++k) instances += scenes[k].boxes.size();
  EXPECT_EQ(rows, instances);

  dump_weight_maps(model, scenes, s, dir / "maps");
  for (std::size_t k = 0; k < 3; ++k) {
    const std::string stem = fs::path(scenes[k].name).stem().string();
    for (int level : {2, 3, 4}) {
      const fs::path pgm = dir / "maps" / (stem + "_P" + std::to_string(level) + ".pgm");
      ASSERT_TRUE(fs::exists(pgm)) << pgm;
      EXPECT_EQ(slurp(pgm).substr(0, 2), "P5");
    }
  }
}

TEST(Ablation, RowsFollowTheGrid) {
  RunConfig c;
  for (const char* o : {"data.image_size=32", "pyramid.min_level=2", "pyramid.max_level=4",
                        "data.min_size=10", "data.max_size=24", "data.max_instances=2",
                        "data.train_count=4", "data.test_count=2", "model.stem_width=2",
                        "model.width=2", "model.head_convs=0", "selection.width=2",
                        "train.epochs=1", "train.phase_switch_epoch=0", "train.batch_size=4",
                        "ablate.sw=on,off", "ablate.ss=off", "ablate.eta=1",
                        "ablate.k=1,3", "ablate.mode=both", "ablate.seeds=0,1"}) {
    c.apply_override(o);
  }
  const Settings s = resolve(c);
  EXPECT_EQ(s.ablation.size(), 8u);
  const auto rows = run_ablation(c, generate_train_set(s), generate_test_set(s));
  ASSERT_EQ(rows.size(), 8u);
  EXPECT_TRUE(rows[0].soft_weighting);
  EXPECT_FALSE(rows[7].soft_weighting);
  EXPECT_EQ(rows[0].top_k, 1);
  EXPECT_EQ(rows[2].top_k, 3);
  EXPECT_EQ(rows[1].seed, 1u);
  EXPECT_EQ(ablation_row(rows[0]).substr(0, 18), "on,off,1,1,both,0,");
}

}  // namespace
}  // namespace sapd
