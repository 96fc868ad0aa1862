// SPDX-License-Identifier: Apache-2.0
#include "sapd/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <stdexcept>

#include "sapd/rng.hpp"

namespace sapd {
namespace {

struct Rgb {
  float r, g, b;
};

bool shape_covers(ShapeKind kind, const GroundTruthBox& box, bool apex_down, float px, float py) {
  const CornerBox c = to_corners(box);
  if (px < c.x1 || px > c.x2 || py < c.y1 || py > c.y2) return false;
  switch (kind) {
    case ShapeKind::rectangle:
      return true;
    case ShapeKind::ellipse: {
      const float dx = (px - box.cx) / (box.w / 2.0f);
      const float dy = (py - box.cy) / (box.h / 2.0f);
      return dx * dx + dy * dy <= 1.0f;
    }
    case ShapeKind::triangle: {
      // Isosceles: apex centered on one horizontal edge, base along the other.
      const float t = apex_down ? (c.y2 - py) / box.h : (py - c.y1) / box.h;
      return std::fabs(px - box.cx) <= t * box.w / 2.0f;
    }
  }
  return false;
}

bool overlaps(const GroundTruthBox& a, const GroundTruthBox& b, float margin) {
  const CornerBox ca = to_corners(a), cb = to_corners(b);
  return ca.x1 < cb.x2 + margin && cb.x1 < ca.x2 + margin && ca.y1 < cb.y2 + margin &&
         cb.y1 < ca.y2 + margin;
}

std::uint8_t quantize(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

std::string scene_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%06d.ppm", index);
  return buf;
}

}  // namespace

Tensor RgbImage::to_tensor() const {
  const auto w = static_cast<std::size_t>(width), h = static_cast<std::size_t>(height);
  Tensor t({3, h, w});
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        t.at(c, y, x) = static_cast<float>(pixels[(y * w + x) * 3 + c]) / 255.0f;
      }
    }
  }
  return t;
}

RgbImage RgbImage::flipped() const {
  RgbImage out = *this;
  const auto w = static_cast<std::size_t>(width);
  for (std::size_t y = 0; y < static_cast<std::size_t>(height); ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        out.pixels[(y * w + x) * 3 + c] = pixels[(y * w + (w - 1 - x)) * 3 + c];
      }
    }
  }
  return out;
}

Scene generate_scene(std::uint64_t seed, int image_size, const DataSettings& settings,
                     SceneMasks* masks) {
  SplitMix64 rng(seed);
  const auto size = static_cast<float>(image_size);
  const auto n = static_cast<std::size_t>(image_size);

  const Rgb background{static_cast<float>(rng.uniform(0.1, 0.9)),
                       static_cast<float>(rng.uniform(0.1, 0.9)),
                       static_cast<float>(rng.uniform(0.1, 0.9))};
  std::vector<Rgb> canvas(n * n, background);

  struct Placed {
    GroundTruthBox box;
    ShapeKind kind;
    bool apex_down;
    Rgb color;
  };
  std::vector<Placed> placed;
  const int wanted = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(settings.max_instances)));
  const double log_lo = std::log(settings.min_size), log_hi = std::log(settings.max_size);
  for (int attempt = 0; attempt < 40 * wanted && static_cast<int>(placed.size()) < wanted; ++attempt) {
    const auto scale = static_cast<float>(std::exp(rng.uniform(log_lo, log_hi)));
    const auto aspect = static_cast<float>(std::exp(rng.uniform(std::log(1.0 / 1.5), std::log(1.5))));
    const float w = std::clamp(scale * std::sqrt(aspect), settings.min_size, settings.max_size);
    const float h = std::clamp(scale / std::sqrt(aspect), settings.min_size, settings.max_size);
    const auto kind = static_cast<ShapeKind>(1 + rng.below(static_cast<std::uint64_t>(settings.num_classes)));
    const bool apex_down = rng.below(2) == 1;
    const auto cx = static_cast<float>(rng.uniform(w / 2.0, size - w / 2.0));
    const auto cy = static_cast<float>(rng.uniform(h / 2.0, size - h / 2.0));
    Rgb color{};
    do {
      color = {static_cast<float>(rng.uniform()), static_cast<float>(rng.uniform()),
               static_cast<float>(rng.uniform())};
    } while ((std::fabs(color.r - background.r) + std::fabs(color.g - background.g) +
              std::fabs(color.b - background.b)) / 3.0f < 0.3f);
    const GroundTruthBox box{static_cast<int>(kind), cx, cy, w, h};
    const bool clash = std::any_of(placed.begin(), placed.end(),
                                   [&](const Placed& p) { return overlaps(p.box, box, 1.0f); });
    if (clash) continue;
    placed.push_back({box, kind, apex_down, color});
  }

  if (masks) masks->masks.assign(placed.size(), std::vector<std::uint8_t>(n * n, 0));
  for (std::size_t k = 0; k < placed.size(); ++k) {
    const Placed& p = placed[k];
    for (std::size_t y = 0; y < n; ++y) {
      for (std::size_t x = 0; x < n; ++x) {
        if (!shape_covers(p.kind, p.box, p.apex_down, static_cast<float>(x) + 0.5f,
                          static_cast<float>(y) + 0.5f)) {
          continue;
        }
        canvas[y * n + x] = p.color;
        if (masks) masks->masks[k][y * n + x] = 1;
      }
    }
  }

  Scene scene;
  scene.image.width = scene.image.height = image_size;
  scene.image.pixels.resize(n * n * 3);
  for (std::size_t i = 0; i < n * n; ++i) {
    const Rgb& c = canvas[i];
    scene.image.pixels[i * 3 + 0] = quantize(c.r + static_cast<float>(settings.noise * rng.normal()));
    scene.image.pixels[i * 3 + 1] = quantize(c.g + static_cast<float>(settings.noise * rng.normal()));
    scene.image.pixels[i * 3 + 2] = quantize(c.b + static_cast<float>(settings.noise * rng.normal()));
  }
  for (const Placed& p : placed) scene.boxes.push_back(p.box);
  return scene;
}

std::vector<Scene> generate_scenes(int count, std::uint64_t seed, int image_size,
                                   const DataSettings& settings) {
  if (count < 1) throw std::invalid_argument("generate_scenes: count must be >= 1");
  std::vector<Scene> scenes;
  scenes.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    Scene s = generate_scene(derive_seed(seed, static_cast<std::uint64_t>(i)), image_size, settings);
    s.name = scene_name(i);
    scenes.push_back(std::move(s));
  }
  return scenes;
}

void write_ppm(const std::filesystem::path& path, const RgbImage& image) {
  std::ofstream out(path, std::ios::binary);
  out << "P6\n" << image.width << " " << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()),
            static_cast<std::streamsize>(image.pixels.size()));
  if (!out) throw std::runtime_error("cannot write image " + path.string());
}

RgbImage read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read image " + path.string());
  auto token = [&]() {
    std::string t;
    while (in) {
      const int c = in.peek();
      if (c == '#') {
        std::string skip;
        std::getline(in, skip);
      } else if (std::isspace(c)) {
        in.get();
      } else {
        break;
      }
    }
    in >> t;
    return t;
  };
  if (token() != "P6") throw std::runtime_error(path.string() + ": not a binary PPM (P6)");
  RgbImage img;
  try {
    img.width = std::stoi(token());
    img.height = std::stoi(token());
    if (std::stoi(token()) != 255) throw std::runtime_error("maxval");
  } catch (const std::exception&) {
    throw std::runtime_error(path.string() + ": malformed PPM header (8-bit P6 expected)");
  }
  in.get();
  img.pixels.resize(static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.height) * 3);
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (!in) throw std::runtime_error(path.string() + ": truncated PPM payload");
  return img;
}

void write_pgm(const std::filesystem::path& path, int width, int height,
               const std::vector<std::uint8_t>& pixels) {
  std::ofstream out(path, std::ios::binary);
  out << "P5\n" << width << " " << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
  if (!out) throw std::runtime_error("cannot write image " + path.string());
}

void write_dataset(const std::filesystem::path& dir, const std::vector<Scene>& scenes) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create dataset directory " + dir.string());
  std::ofstream ann(dir / kAnnotationFile, std::ios::binary);
  if (!ann) throw std::runtime_error("cannot write " + (dir / kAnnotationFile).string());
  for (const Scene& s : scenes) {
    write_ppm(dir / s.name, s.image);
    nlohmann::json record;
    record["image"] = s.name;
    record["boxes"] = nlohmann::json::array();
    for (const GroundTruthBox& b : s.boxes) {
      record["boxes"].push_back(
          {{"class", b.class_id}, {"cx", b.cx}, {"cy", b.cy}, {"w", b.w}, {"h", b.h}});
    }
    ann << record.dump() << "\n";
  }
  if (!ann) throw std::runtime_error("cannot write annotations in " + dir.string());
}

std::vector<Scene> load_dataset(const std::filesystem::path& dir) {
  std::ifstream ann(dir / kAnnotationFile);
  if (!ann) throw std::runtime_error("cannot read " + (dir / kAnnotationFile).string());
  std::vector<Scene> scenes;
  std::string line;
  int line_no = 0;
  while (std::getline(ann, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Scene s;
    try {
      const auto record = nlohmann::json::parse(line);
      s.name = record.at("image").get<std::string>();
      s.image = read_ppm(dir / s.name);
      for (const auto& b : record.at("boxes")) {
        const GroundTruthBox raw{b.at("class").get<int>(), b.at("cx").get<float>(),
                                 b.at("cy").get<float>(), b.at("w").get<float>(),
                                 b.at("h").get<float>()};
        if (raw.class_id < 1) throw std::runtime_error("class ids start at 1");
        if (auto clipped = clip_to_image(raw, static_cast<float>(s.image.width),
                                         static_cast<float>(s.image.height))) {
          s.boxes.push_back(*clipped);
        }
      }
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error((dir / kAnnotationFile).string() + " line " +
                               std::to_string(line_no) + ": " + e.what());
    }
    scenes.push_back(std::move(s));
  }
  return scenes;
}

std::vector<GroundTruthBox> flip_boxes(const std::vector<GroundTruthBox>& boxes, float width) {
  std::vector<GroundTruthBox> out = boxes;
  for (GroundTruthBox& b : out) b.cx = width - b.cx;
  return out;
}

}  // namespace sapd
