// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sapd/config.hpp"
#include "sapd/geometry.hpp"
#include "sapd/tensor.hpp"

namespace sapd {

enum class ShapeKind { rectangle = 1, ellipse = 2, triangle = 3 };

/// 8-bit RGB image stored row-major, interleaved.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  /// (3, H, W) float tensor with values v / 255.
  Tensor to_tensor() const;
  /// Horizontally mirrored copy.
  RgbImage flipped() const;
};

struct Scene {
  std::string name;  // image file name inside the dataset directory
  RgbImage image;
  std::vector<GroundTruthBox> boxes;
};

struct SceneMasks {
  /// One H*W coverage mask per instance, 1 where the shape was painted.
  std::vector<std::vector<std::uint8_t>> masks;
};

/// Random filled rectangles, ellipses and triangles (class ids 1, 2, 3) on a
/// noisy background. Instances do not overlap; sizes are log-uniform in
/// [min_size, max_size]. Fully determined by `seed`.
Scene generate_scene(std::uint64_t seed, int image_size, const DataSettings& settings,
                     SceneMasks* masks = nullptr);

std::vector<Scene> generate_scenes(int count, std::uint64_t seed, int image_size,
                                   const DataSettings& settings);

/// Writes `<name>` PPM images plus annotations.jsonl into `dir`.
void write_dataset(const std::filesystem::path& dir, const std::vector<Scene>& scenes);
/// Reads a dataset written by write_dataset. Boxes are clipped to the image.
std::vector<Scene> load_dataset(const std::filesystem::path& dir);

inline constexpr const char* kAnnotationFile = "annotations.jsonl";

void write_ppm(const std::filesystem::path& path, const RgbImage& image);
RgbImage read_ppm(const std::filesystem::path& path);
/// 8-bit grayscale PGM (P5).
void write_pgm(const std::filesystem::path& path, int width, int height,
               const std::vector<std::uint8_t>& pixels);

/// Horizontal flip of boxes about the image's vertical center line.
std::vector<GroundTruthBox> flip_boxes(const std::vector<GroundTruthBox>& boxes, float width);

}  // namespace sapd
