// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "sapd/config.hpp"
#include "sapd/geometry.hpp"
#include "sapd/head_outputs.hpp"

namespace sapd {

class Model;

struct Detection {
  int class_id = 0;
  float score = 0.0f;
  CornerBox box;
  int level = 0;
};

/// Greedy class-wise non-maximum suppression. A detection is suppressed when
/// its IoU with an already kept detection of the same class exceeds
/// `threshold`. Returns kept indices by descending score, equal scores in
/// index order.
std::vector<std::size_t> nms(std::span<const Detection> detections, float threshold);

/// Scores above the threshold on one level, at most top_n of them (highest
/// first), decoded to clipped image-space boxes.
std::vector<Detection> decode_level(const LevelOutputs& outputs, int level, float z,
                                    const PyramidSpec& pyramid, const InferSettings& infer);

/// Merges every level's candidates and applies class-wise NMS. The result is
/// sorted by descending score.
std::vector<Detection> postprocess(const PyramidOutputs& outputs, const PyramidSpec& pyramid,
                                   float z, const InferSettings& infer);

std::vector<Detection> infer(const Model& model, const Tensor& image, const Settings& settings);

struct ImageDetections {
  std::string image;
  std::vector<Detection> detections;
};

/// JSON lines: {"image": ..., "detections": [{"class", "score", "x1", "y1",
/// "x2", "y2", "level"}, ...]}.
void write_detections(const std::filesystem::path& path, std::span<const ImageDetections> images);
std::vector<ImageDetections> read_detections(const std::filesystem::path& path);

}  // namespace sapd
