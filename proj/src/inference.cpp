// SPDX-License-Identifier: Apache-2.0
#include "sapd/inference.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "sapd/layers.hpp"
#include "sapd/trainer.hpp"

namespace sapd {

std::vector<std::size_t> nms(std::span<const Detection> detections, float threshold) {
  std::vector<std::size_t> order(detections.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return detections[a].score > detections[b].score;
  });

  // Kept boxes grouped per class; a candidate only ever meets its own class.
  std::map<int, std::vector<std::size_t>> kept_by_class;
  std::vector<std::size_t> kept;
  for (std::size_t idx : order) {
    const Detection& d = detections[idx];
    std::vector<std::size_t>& same = kept_by_class[d.class_id];
    const bool suppressed = std::any_of(same.begin(), same.end(), [&](std::size_t k) {
      return iou(detections[k].box, d.box) > threshold;
    });
    if (suppressed) continue;
    same.push_back(idx);
    kept.push_back(idx);
  }
  return kept;
}

std::vector<Detection> decode_level(const LevelOutputs& outputs, int level, float z,
                                    const PyramidSpec& pyramid, const InferSettings& infer) {
  const Tensor& cls = outputs.cls_logits;
  const int gh = static_cast<int>(cls.dim(1));
  const int gw = static_cast<int>(cls.dim(2));
  const std::size_t plane = static_cast<std::size_t>(gw * gh);
  std::vector<float> scores(cls.values().size());
  std::transform(cls.values().begin(), cls.values().end(), scores.begin(),
                 [](float x) { return sigmoid(x); });

  std::vector<std::size_t> candidates;
  for (std::size_t n = 0; n < scores.size(); ++n) {
    if (scores[n] > infer.score_threshold) candidates.push_back(n);
  }
  std::stable_sort(candidates.begin(), candidates.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  if (candidates.size() > static_cast<std::size_t>(infer.top_n)) {
    candidates.resize(static_cast<std::size_t>(infer.top_n));
  }

  std::vector<Detection> out;
  out.reserve(candidates.size());
  for (std::size_t n : candidates) {
    const std::size_t k = n / plane;
    const std::size_t a = n % plane;
    const int i = static_cast<int>(a % static_cast<std::size_t>(gw));
    const int j = static_cast<int>(a / static_cast<std::size_t>(gw));
    const AnchorPoint anchor{level, i, j};
    const DistanceTargets d = predicted_distances(outputs.loc_raw, i, j);
    out.push_back({static_cast<int>(k) + 1, scores[n],
                   decode_box(anchor, d, z, static_cast<float>(pyramid.image_width),
                              static_cast<float>(pyramid.image_height)),
                   level});
  }
  return out;
}

std::vector<Detection> postprocess(const PyramidOutputs& outputs, const PyramidSpec& pyramid,
                                   float z, const InferSettings& infer) {
  std::vector<Detection> all;
  for (std::size_t l = 0; l < outputs.size(); ++l) {
    auto level = decode_level(outputs[l], pyramid.level_at(static_cast<int>(l)), z, pyramid, infer);
    all.insert(all.end(), level.begin(), level.end());
  }
  std::vector<Detection> out;
  for (std::size_t idx : nms(all, infer.nms_threshold)) out.push_back(all[idx]);
  return out;
}

std::vector<Detection> infer(const Model& model, const Tensor& image, const Settings& settings) {
  const auto pass = model.detector.forward(image);
  return postprocess(pass.outputs, settings.pyramid, settings.z, settings.infer);
}

void write_detections(const std::filesystem::path& path, std::span<const ImageDetections> images) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const ImageDetections& img : images) {
    nlohmann::json dets = nlohmann::json::array();
    for (const Detection& d : img.detections) {
      dets.push_back({{"class", d.class_id},
                      {"score", d.score},
                      {"x1", d.box.x1},
                      {"y1", d.box.y1},
                      {"x2", d.box.x2},
                      {"y2", d.box.y2},
                      {"level", d.level}});
    }
    out << nlohmann::json{{"image", img.image}, {"detections", dets}}.dump() << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::vector<ImageDetections> read_detections(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::vector<ImageDetections> images;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto rec = nlohmann::json::parse(line);
      ImageDetections img;
      img.image = rec.at("image").get<std::string>();
      for (const auto& d : rec.at("detections")) {
        img.detections.push_back({d.at("class").get<int>(), d.at("score").get<float>(),
                                  CornerBox{d.at("x1").get<float>(), d.at("y1").get<float>(),
                                            d.at("x2").get<float>(), d.at("y2").get<float>()},
                                  d.value("level", 0)});
      }
      images.push_back(std::move(img));
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return images;
}

}  // namespace sapd
