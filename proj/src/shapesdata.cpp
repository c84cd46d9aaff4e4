// Copyright 2026 The myolo Authors
// SPDX-License-Identifier: Apache-2.0

#include "myolo/shapesdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "myolo/image_io.hpp"
#include "myolo/serialize.hpp"

namespace myolo {

namespace {

constexpr double kLatticeSpacing = 12.0;
constexpr double kMinContrast = 0.3;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::array<double, 3> background_base(std::uint64_t seed) {
  std::mt19937_64 rng(splitmix64(seed ^ 0xb4c6f00dULL));
  std::uniform_real_distribution<double> u(0.3, 0.7);
  const double gray = u(rng);
  std::uniform_real_distribution<double> tint(-0.05, 0.05);
  return {gray + tint(rng), gray + tint(rng), gray + tint(rng)};
}

std::array<double, 3> contrasting_color(const std::array<double, 3>& base, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::array<double, 3> color{};
  for (int attempt = 0; attempt < 64; ++attempt) {
    for (double& c : color) c = u(rng);
    double diff = 0;
    for (int k = 0; k < 3; ++k) diff += std::abs(color[static_cast<std::size_t>(k)] - base[static_cast<std::size_t>(k)]);
    if (diff / 3.0 >= kMinContrast) return color;
  }
  // Fall back to the opposite end of the gray range.
  const double mean = (base[0] + base[1] + base[2]) / 3.0;
  const double v = mean > 0.5 ? 0.05 : 0.95;
  return {v, v, v};
}

bool inside(const ShapeSpec& s, double px, double py) {
  const double dx = px - s.cx, dy = py - s.cy;
  switch (s.kind) {
    case ShapeKind::disk: {
      const double nx = dx / (s.w / 2), ny = dy / (s.h / 2);
      return nx * nx + ny * ny <= 1.0;
    }
    case ShapeKind::square:
      return std::abs(dx) <= s.w / 2 && std::abs(dy) <= s.h / 2;
    case ShapeKind::triangle: {
      // Apex at the top center, base along the bottom edge.
      const double top = s.cy - s.h / 2;
      if (py < top || py > s.cy + s.h / 2) return false;
      return std::abs(dx) <= (s.w / 2) * (py - top) / s.h;
    }
  }
  return false;
}

BBox box_of(const ShapeSpec& s) { return {s.cx, s.cy, s.w, s.h}; }

bool boxes_touch(const BBox& a, const BBox& b, double gap) {
  return a.left() - gap < b.right() && b.left() - gap < a.right() && a.top() - gap < b.bottom() &&
         b.top() - gap < a.bottom();
}

void draw_extent(std::mt19937_64& rng, const GeneratorOptions& o, double& w, double& h) {
  std::uniform_real_distribution<double> log_size(std::log(o.min_size), std::log(o.max_size));
  std::uniform_real_distribution<double> log_aspect(-std::log(o.max_aspect), std::log(o.max_aspect));
  const double size = std::exp(log_size(rng));
  const double aspect = std::exp(log_aspect(rng));
  w = size * std::sqrt(aspect);
  h = size / std::sqrt(aspect);
}

}  // namespace

std::string_view shape_name(ShapeKind kind) {
  switch (kind) {
    case ShapeKind::disk: return "disk";
    case ShapeKind::square: return "square";
    case ShapeKind::triangle: return "triangle";
  }
  return "?";
}

void SceneSpec::validate() const {
  if (image_size < 1) throw Error("scene: image size must be positive");
  if (noise_amplitude < 0) throw Error("scene: noise amplitude must be non-negative");
  for (std::size_t n = 0; n < shapes.size(); ++n) {
    const ShapeSpec& s = shapes[n];
    const std::string tag = "scene: shape " + std::to_string(n) + " ";
    if (!(s.w >= kMinShapeSize && s.h >= kMinShapeSize)) {
      throw Error(tag + "smaller than " + std::to_string(kMinShapeSize) + " px");
    }
    const BBox b = box_of(s);
    if (b.left() < 0 || b.top() < 0 || b.right() > image_size || b.bottom() > image_size) {
      throw Error(tag + "extends outside the image");
    }
    for (double c : s.color) {
      if (!(c >= 0.0 && c <= 1.0)) throw Error(tag + "color outside [0,1]");
    }
    for (std::size_t m = 0; m < n; ++m) {
      if (iou(b, box_of(shapes[m])) > kMaxSceneOverlap) {
        throw Error("scene: shapes " + std::to_string(m) + " and " + std::to_string(n) + " overlap beyond IOU " +
                    std::to_string(kMaxSceneOverlap));
      }
    }
  }
}

RenderedScene render(const SceneSpec& spec) {
  spec.validate();
  const int S = spec.image_size;
  const auto base = background_base(spec.seed);
  std::mt19937_64 rng(splitmix64(spec.seed));
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const int lattice = static_cast<int>(std::ceil(S / kLatticeSpacing)) + 2;

  RenderedScene scene;
  scene.image = Tensor({3, S, S});
  for (int c = 0; c < 3; ++c) {
    std::vector<double> knots(static_cast<std::size_t>(lattice * lattice));
    for (double& k : knots) k = u(rng);
    auto knot = [&](int gy, int gx) { return knots[static_cast<std::size_t>(gy * lattice + gx)]; };
    for (int y = 0; y < S; ++y) {
      const double fy = (y + 0.5) / kLatticeSpacing;
      const int gy = static_cast<int>(fy);
      const double ty = fy - gy;
      for (int x = 0; x < S; ++x) {
        const double fx = (x + 0.5) / kLatticeSpacing;
        const int gx = static_cast<int>(fx);
        const double tx = fx - gx;
        const double top = knot(gy, gx) * (1 - tx) + knot(gy, gx + 1) * tx;
        const double bottom = knot(gy + 1, gx) * (1 - tx) + knot(gy + 1, gx + 1) * tx;
        scene.image(c, y, x) = base[static_cast<std::size_t>(c)] + spec.noise_amplitude * (top * (1 - ty) + bottom * ty);
      }
    }
  }
  for (const ShapeSpec& s : spec.shapes) {
    const int x0 = std::max(0, static_cast<int>(std::floor(s.cx - s.w / 2)));
    const int x1 = std::min(S - 1, static_cast<int>(std::ceil(s.cx + s.w / 2)));
    const int y0 = std::max(0, static_cast<int>(std::floor(s.cy - s.h / 2)));
    const int y1 = std::min(S - 1, static_cast<int>(std::ceil(s.cy + s.h / 2)));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        if (!inside(s, x + 0.5, y + 0.5)) continue;
        for (int c = 0; c < 3; ++c) scene.image(c, y, x) = s.color[static_cast<std::size_t>(c)];
      }
    }
    scene.annotations.push_back({box_of(s), static_cast<int>(s.kind)});
  }
  scene.image.values() = scene.image.values().unaryExpr([](double v) { return to_byte(v) / 255.0; });
  return scene;
}

bool is_border_cell(const CellAddress& cell, const ModelConfig& config) {
  const int S = config.grid(cell.pathway);
  return cell.i <= 0 || cell.j <= 0 || cell.i >= S - 1 || cell.j >= S - 1;
}

std::array<double, 2> placement_at_cell(const CellAddress& cell, const ModelConfig& config, double jitter,
                                        std::mt19937_64& rng) {
  if (!(jitter >= 0.0 && jitter < 0.5)) throw Error("placement_at_cell: jitter must lie in [0, 0.5)");
  if (is_border_cell(cell, config)) {
    throw Error("placement_at_cell: cell (" + std::to_string(cell.i) + "," + std::to_string(cell.j) + ") of the " +
                std::string(pathway_name(cell.pathway)) + " pathway is a border cell");
  }
  const double stride = config.stride(cell.pathway);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const double ox = jitter > 0 ? jitter * u(rng) : 0.0;
  const double oy = jitter > 0 ? jitter * u(rng) : 0.0;
  return {(cell.j + 0.5 + ox) * stride, (cell.i + 0.5 + oy) * stride};
}

SceneSpec random_scene(std::uint64_t seed, const ModelConfig& config, const GeneratorOptions& options) {
  std::mt19937_64 rng(seed);
  SceneSpec spec;
  spec.seed = seed;
  spec.image_size = config.input_size;
  spec.noise_amplitude = options.noise_amplitude;
  const auto base = background_base(seed);
  const double S = config.input_size;
  std::uniform_int_distribution<int> count(options.min_objects, options.max_objects);
  std::uniform_int_distribution<int> kind(0, kShapeKinds - 1);
  const int n = count(rng);
  for (int k = 0; k < n; ++k) {
    for (int attempt = 0; attempt < 50; ++attempt) {
      ShapeSpec s;
      s.kind = static_cast<ShapeKind>(kind(rng));
      draw_extent(rng, options, s.w, s.h);
      s.w = std::min(s.w, S - 2);
      s.h = std::min(s.h, S - 2);
      std::uniform_real_distribution<double> px(s.w / 2, S - s.w / 2);
      std::uniform_real_distribution<double> py(s.h / 2, S - s.h / 2);
      s.cx = px(rng);
      s.cy = py(rng);
      s.color = contrasting_color(base, rng);
      const bool clear = std::none_of(spec.shapes.begin(), spec.shapes.end(),
                                      [&](const ShapeSpec& o) { return boxes_touch(box_of(s), box_of(o), 2.0); });
      if (clear) {
        spec.shapes.push_back(s);
        break;
      }
    }
  }
  return spec;
}

SceneSpec scene_at_cell(std::uint64_t seed, const ModelConfig& config, const CellAddress& cell, int class_id,
                        double jitter, const GeneratorOptions& options) {
  if (class_id < 0 || class_id >= kShapeKinds) throw Error("scene_at_cell: unknown class id " + std::to_string(class_id));
  std::mt19937_64 rng(seed);
  SceneSpec spec;
  spec.seed = seed;
  spec.image_size = config.input_size;
  spec.noise_amplitude = options.noise_amplitude;
  const auto [cx, cy] = placement_at_cell(cell, config, jitter, rng);
  ShapeSpec s;
  s.kind = static_cast<ShapeKind>(class_id);
  s.cx = cx;
  s.cy = cy;
  draw_extent(rng, options, s.w, s.h);
  const double S = config.input_size;
  s.w = std::max(kMinShapeSize, std::min(s.w, 2.0 * std::min(cx, S - cx)));
  s.h = std::max(kMinShapeSize, std::min(s.h, 2.0 * std::min(cy, S - cy)));
  s.color = contrasting_color(background_base(seed), rng);
  spec.shapes.push_back(s);
  return spec;
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view split, std::uint64_t index) {
  return splitmix64(splitmix64(seed ^ fnv1a(split.data(), split.size())) + index);
}

std::vector<Sample> make_samples(std::string_view split, int count, std::uint64_t seed, const ModelConfig& config,
                                 const GeneratorOptions& options) {
  std::vector<Sample> samples;
  samples.reserve(static_cast<std::size_t>(std::max(count, 0)));
  for (int n = 0; n < count; ++n) {
    RenderedScene scene = render(random_scene(derive_seed(seed, split, static_cast<std::uint64_t>(n)), config, options));
    char name[64];
    std::snprintf(name, sizeof name, "%.*s_%05d.png", static_cast<int>(split.size()), split.data(), n);
    samples.push_back({name, std::move(scene.image), std::move(scene.annotations)});
  }
  return samples;
}

AnchorSet default_priors(const ModelConfig& config, const GeneratorOptions& options) {
  std::vector<std::array<double, 2>> extents;
  for (std::uint64_t n = 0; extents.size() < 4000; ++n) {
    for (const ShapeSpec& s : random_scene(derive_seed(0x5eed, "priors", n), config, options).shapes) {
      extents.push_back({s.w, s.h});
    }
  }
  return kmeans_priors(extents, config.anchors_per_cell);
}

const Sample& Dataset::find(const std::string& id) const {
  for (const Sample& s : samples) {
    if (s.id == id) return s;
  }
  throw Error("dataset: unknown image id '" + id + "'");
}

void generate_dataset(int n_train, int n_val, std::uint64_t seed, const ModelConfig& config,
                      const std::filesystem::path& out_dir, const GeneratorOptions& options) {
  if (n_train < 1) throw Error("generate_dataset: n_train must be at least 1");
  if (n_val < 0) throw Error("generate_dataset: n_val must be non-negative");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec || !std::filesystem::is_directory(out_dir)) {
    throw Error("generate_dataset: cannot create directory '" + out_dir.string() + "'");
  }
  Json annotations = Json::array();
  for (const auto& [split, count] : {std::pair<std::string_view, int>{"train", n_train}, {"val", n_val}}) {
    for (const Sample& s : make_samples(split, count, seed, config, options)) {
      write_file(out_dir / s.id, encode_png(s.image));
      Json boxes = Json::array();
      for (const Annotation& a : s.annotations) boxes.push_back(to_json(a));
      annotations.push_back({{"image", s.id}, {"boxes", boxes}});
    }
  }
  write_file(out_dir / "annotations.json", annotations.dump(1) + "\n");
  const Json meta{{"seed", seed},
                  {"config_hash", config_hash(config)},
                  {"image_size", config.input_size},
                  {"n_train", n_train},
                  {"n_val", n_val},
                  {"generator",
                   {{"min_objects", options.min_objects},
                    {"max_objects", options.max_objects},
                    {"min_size", options.min_size},
                    {"max_size", options.max_size},
                    {"max_aspect", options.max_aspect},
                    {"noise_amplitude", options.noise_amplitude}}}};
  write_file(out_dir / "meta.json", meta.dump(1) + "\n");
}

Dataset load_dataset(const std::filesystem::path& dir, std::string_view prefix) {
  Dataset dataset;
  dataset.root = dir;
  Json annotations;
  try {
    annotations = Json::parse(read_file(dir / "annotations.json"));
  } catch (const Json::exception& e) {
    throw Error(std::string("dataset: malformed annotations.json: ") + e.what());
  }
  try {
    for (const Json& entry : annotations) {
      const std::string name = entry.at("image").get<std::string>();
      if (!prefix.empty() && name.rfind(prefix, 0) != 0) continue;
      Sample s;
      s.id = name;
      s.image = decode_png(read_file(dir / name));
      for (const Json& b : entry.at("boxes")) s.annotations.push_back(annotation_from_json(b));
      dataset.samples.push_back(std::move(s));
    }
  } catch (const Json::exception& e) {
    throw Error(std::string("dataset: malformed annotations.json: ") + e.what());
  }
  return dataset;
}

}  // namespace myolo
