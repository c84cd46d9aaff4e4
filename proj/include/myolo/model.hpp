// Copyright 2026 The myolo Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "myolo/autodiff.hpp"
#include "myolo/boxes.hpp"
#include "myolo/tensor.hpp"

namespace myolo {

/// Shape of the mini detector. The backbone has one stride-2 stage per entry
/// of `backbone_widths`; the last three stages sit at strides[0..2] and feed
/// the head.
struct ModelConfig {
  int input_size = 96;
  int num_classes = 3;
  int anchors_per_cell = 3;
  std::array<int, kPathways> strides{8, 16, 32};
  std::vector<int> backbone_widths{8, 16, 32, 48, 64};
  int head_width = 32;
  double leaky_alpha = 0.1;
  std::vector<std::string> tap_layers = default_tap_layers();

  int channels_per_anchor() const { return 5 + num_classes; }
  int output_channels() const { return anchors_per_cell * channels_per_anchor(); }
  int stride(Pathway p) const { return strides[static_cast<std::size_t>(index_of(p))]; }
  int grid(Pathway p) const { return input_size / stride(p); }

  /// Throws Error naming the violated constraint.
  void validate() const;

  /// Same topology at the 416 px / 80 class scale (grids 52, 26, 13).
  static ModelConfig full_scale();
  static std::vector<std::string> default_tap_layers();

  bool operator==(const ModelConfig&) const = default;
};

struct ConvSpec {
  std::string name;
  int in_channels = 0;
  int out_channels = 0;
  int k = 3;
  int stride = 1;
  bool linear = false;  // raw output (head projections)
};

/// Ordered conv layers implied by a config. Names are stable checkpoint keys.
std::vector<ConvSpec> layer_plan(const ModelConfig& config);

struct ModelState {
  ModelConfig config;
  /// "<layer>.weight" -> [out,in,k,k], "<layer>.bias" -> [out]
  std::map<std::string, Tensor> params;

  Index parameter_count() const;
  /// Checks every planned parameter exists exactly once with its planned shape.
  void validate() const;
};

/// Deterministic He-style fan-in initialization; confidence biases start at -4.
ModelState build(const ModelConfig& config, std::uint64_t seed);

inline constexpr double kConfidenceBiasInit = -4.0;

struct PathwayOutput {
  Pathway pathway = Pathway::small;
  Tensor grid;  // [A*(5+C), S, S] raw
  int stride = 0;
};

struct ForwardOptions {
  /// Record parameters as gradient-tracked leaves.
  bool track_params = true;
  /// Called with every exposed tap; may return a replacement Var (used to
  /// perturb a tap activation in attribution checks).
  std::function<Var(const std::string& tap, Var activation)> tap_hook;
};

struct TapeForward {
  std::array<Var, kPathways> outputs;
  std::map<std::string, Var> taps;
  std::map<std::string, Var> params;
};

/// Forward pass recorded on `tape`. Image must be [3, input_size, input_size].
TapeForward forward(Tape& tape, const ModelState& state, const Tensor& image,
                    const ForwardOptions& options = {});

struct Inference {
  std::array<PathwayOutput, kPathways> outputs;
  std::map<std::string, Tensor> taps;
};

Inference infer(const ModelState& state, const Tensor& image);

/// Channel index of field `field` (0..4 = x,y,w,h,c; 5+k = class k) of `anchor`.
inline int channel_of(const ModelConfig& config, int anchor, int field) {
  return anchor * config.channels_per_anchor() + field;
}

}  // namespace myolo
