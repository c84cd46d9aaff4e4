// Copyright 2026 The myolo Authors
// SPDX-License-Identifier: Apache-2.0

// Detection saliency: for one raw output neuron of one cell/anchor, the map
// over a tap layer's grid is mean_c(activation[c] * d neuron / d activation[c]).
// No spatial averaging of gradients and no ReLU; maps stay signed.

#pragma once

#include <Eigen/Core>

#include <map>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "myolo/model.hpp"
#include "myolo/serialize.hpp"
#include "myolo/train.hpp"

namespace myolo {

enum class NeuronKind { x, y, w, h, c, p };

std::string_view neuron_name(NeuronKind kind);
NeuronKind parse_neuron(std::string_view name);

struct NeuronSelector {
  CellAddress cell;
  NeuronKind kind = NeuronKind::c;
  int class_id = -1;  // required for kind p

  /// Output channel offset within the anchor's 5 + C block.
  int field() const;
  void validate(const ModelConfig& config) const;
};

struct SaliencyMap {
  std::string tap_layer;
  Eigen::MatrixXd values;  // [H_L, W_L]
  NeuronSelector selector;
  int n_images = 1;
  std::vector<std::string> image_ids;
  int shortfall = 0;  // requested images that were not available
};

/// `seed` scales the backward seed (the map is linear in it).
SaliencyMap saliency_single(const ModelState& state, const Tensor& image, const NeuronSelector& selector,
                            const std::string& tap_layer, double seed = 1.0);

/// Images (dataset order) containing an instance of `class_id` whose box
/// center falls inside the pixel footprint of `cell`.
std::vector<std::string> select_images_for_cell(std::span<const Sample> dataset, int class_id,
                                                const CellAddress& cell, const ModelConfig& config);

/// Precomputed (class, pathway, i, j) -> image ids lookup.
class CellIndex {
 public:
  CellIndex(std::span<const Sample> dataset, const ModelConfig& config);
  std::vector<std::string> images(int class_id, const CellAddress& cell) const;

 private:
  std::map<std::tuple<int, int, int, int>, std::vector<std::string>> index_;
};

/// Mean of single-image maps over the first `n` qualifying images. Border
/// cells are rejected; fewer than `n` images proceeds and records the
/// shortfall; none at all is an error.
SaliencyMap saliency_averaged(const ModelState& state, std::span<const Sample> dataset, int class_id,
                              const CellAddress& cell, NeuronKind kind, const std::string& tap_layer, int n = 15);

/// Average of explicit images (all treated as qualifying).
SaliencyMap saliency_mean(const ModelState& state, std::span<const Sample* const> images,
                          const NeuronSelector& selector, const std::string& tap_layer);

/// Moments of |map| as a mass distribution, in tap-grid index units.
struct MapMoments {
  double mass = 0;
  double row = 0;  // center of mass
  double col = 0;
  double var_row = 0;
  double var_col = 0;

  double rms_radius() const;
};

MapMoments moments(const Eigen::MatrixXd& map);

/// RMS distance of |map| mass from its center of mass (tap cells).
double concentration(const SaliencyMap& map);

/// Position of the cell's center on the tap grid (index units).
std::array<double, 2> project_to_tap(const CellAddress& cell, const ModelConfig& config, int tap_rows, int tap_cols);

Json to_json(const NeuronSelector& s);
Json to_json(const SaliencyMap& map);
/// |map| through a viridis-style ramp: min |value| -> index 0, max -> 255.
std::string heatmap_png(const SaliencyMap& map);
std::array<std::uint8_t, 3> viridis(std::uint8_t level);

}  // namespace myolo
