// Copyright 2026 The myolo Authors
// SPDX-License-Identifier: Apache-2.0

// Deterministic synthetic detection data: colored disks, squares and
// triangles over low-amplitude value noise. Class id == shape kind.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "myolo/assign.hpp"
#include "myolo/model.hpp"
#include "myolo/train.hpp"

namespace myolo {

enum class ShapeKind : int { disk = 0, square = 1, triangle = 2 };
inline constexpr int kShapeKinds = 3;

std::string_view shape_name(ShapeKind kind);

struct ShapeSpec {
  ShapeKind kind = ShapeKind::disk;
  double cx = 0;
  double cy = 0;
  double w = 0;  // disks with w != h render as ellipses, squares as rectangles
  double h = 0;
  std::array<double, 3> color{1.0, 1.0, 1.0};
};

struct SceneSpec {
  std::uint64_t seed = 0;  // background texture
  int image_size = 96;
  std::vector<ShapeSpec> shapes;
  double noise_amplitude = 0.08;

  /// Shapes inside the image, extents >= kMinShapeSize, pairwise IOU <= 0.3.
  void validate() const;
};

inline constexpr double kMinShapeSize = 6.0;
inline constexpr double kMaxSceneOverlap = 0.3;

struct RenderedScene {
  Tensor image;  // [3, S, S], values on the 1/255 lattice
  std::vector<Annotation> annotations;
};

RenderedScene render(const SceneSpec& spec);

/// Random center inside cell (i, j): ((j + 0.5 + u * jitter) * stride, ...)
/// with u uniform in [-1, 1]. jitter in [0, 0.5); jitter 0 gives the exact
/// cell center. Border cells are rejected.
std::array<double, 2> placement_at_cell(const CellAddress& cell, const ModelConfig& config, double jitter,
                                        std::mt19937_64& rng);

bool is_border_cell(const CellAddress& cell, const ModelConfig& config);

struct GeneratorOptions {
  int min_objects = 1;
  int max_objects = 3;
  double min_size = 12.0;
  double max_size = 56.0;
  double max_aspect = 1.5;  // w/h drawn log-uniformly in [1/max_aspect, max_aspect]
  double noise_amplitude = 0.08;

  bool operator==(const GeneratorOptions&) const = default;
};

/// Scene with random objects; boxes never intersect.
SceneSpec random_scene(std::uint64_t seed, const ModelConfig& config, const GeneratorOptions& options = {});

/// Single object of `class_id` centered under `cell` (see placement_at_cell),
/// its size drawn from the options' range and shrunk to fit in the image.
SceneSpec scene_at_cell(std::uint64_t seed, const ModelConfig& config, const CellAddress& cell, int class_id,
                        double jitter, const GeneratorOptions& options = {});

/// Per-image seed for split `split` ("train"/"val"/...) and index.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view split, std::uint64_t index);

std::vector<Sample> make_samples(std::string_view split, int count, std::uint64_t seed, const ModelConfig& config,
                                 const GeneratorOptions& options = {});

/// Priors from k-means over a fixed sample of generator box extents.
AnchorSet default_priors(const ModelConfig& config, const GeneratorOptions& options = {});

struct Dataset {
  std::filesystem::path root;
  std::vector<Sample> samples;  // id == image file name

  const Sample& find(const std::string& id) const;
};

/// Writes train_*.png / val_*.png, annotations.json ([{image, boxes}]) and
/// meta.json (seed, config hash, counts) into `out_dir`.
void generate_dataset(int n_train, int n_val, std::uint64_t seed, const ModelConfig& config,
                      const std::filesystem::path& out_dir, const GeneratorOptions& options = {});

/// Reads annotations.json and the referenced PNGs. `prefix` filters image
/// names (e.g. "train_"); empty keeps everything.
Dataset load_dataset(const std::filesystem::path& dir, std::string_view prefix = {});

}  // namespace myolo
