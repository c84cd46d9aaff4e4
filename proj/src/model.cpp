// Copyright 2026 The myolo Authors
// SPDX-License-Identifier: Apache-2.0

#include "myolo/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace myolo {

namespace {

int log2_exact(int v) {
  int n = 0;
  while (v > 1 && v % 2 == 0) {
    v /= 2;
    ++n;
  }
  return v == 1 ? n : -1;
}

std::string backbone_down(std::size_t s) { return "backbone.down" + std::to_string(s); }
std::string backbone_conv(std::size_t s) { return "backbone.conv" + std::to_string(s); }

}  // namespace

std::vector<std::string> ModelConfig::default_tap_layers() {
  std::vector<std::string> taps;
  for (Pathway p : kAllPathways) {
    for (const char* layer : {"fuse", "conv1", "conv2", "out"}) {
      taps.push_back(std::string(pathway_name(p)) + "." + layer);
    }
  }
  return taps;
}

ModelConfig ModelConfig::full_scale() {
  ModelConfig config;
  config.input_size = 416;
  config.num_classes = 80;
  config.anchors_per_cell = 3;
  return config;
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error("model config: " + what); };
  if (input_size <= 0) fail("input_size must be positive");
  if (num_classes < 1) fail("num_classes must be positive");
  if (anchors_per_cell < 1) fail("anchors_per_cell must be positive");
  const int first_log = log2_exact(strides[0]);
  if (first_log < 1) fail("pathway_strides[0] must be a power of two >= 2");
  if (strides[1] != 2 * strides[0] || strides[2] != 2 * strides[1]) {
    fail("pathway_strides must double from one pathway to the next");
  }
  for (int s : strides) {
    if (input_size % s != 0) {
      fail("input_size " + std::to_string(input_size) + " not divisible by stride " + std::to_string(s));
    }
  }
  if (backbone_widths.size() != static_cast<std::size_t>(first_log + 2)) {
    fail("backbone_widths needs " + std::to_string(first_log + 2) + " entries for strides starting at " +
         std::to_string(strides[0]));
  }
  if (std::any_of(backbone_widths.begin(), backbone_widths.end(), [](int w) { return w < 1; })) {
    fail("backbone_widths must be positive");
  }
  if (head_width < 1) fail("head_width must be positive");
  if (leaky_alpha < 0) fail("leaky_alpha must be non-negative");
  const auto plan = layer_plan(*this);
  for (const auto& tap : tap_layers) {
    if (std::none_of(plan.begin(), plan.end(), [&](const ConvSpec& c) { return c.name == tap; })) {
      fail("tap layer '" + tap + "' is not a layer of the model");
    }
  }
}

std::vector<ConvSpec> layer_plan(const ModelConfig& config) {
  std::vector<ConvSpec> plan;
  const auto& widths = config.backbone_widths;
  const std::size_t n = widths.size();
  const int h = config.head_width;
  int prev = 3;
  for (std::size_t s = 0; s < n; ++s) {
    plan.push_back({backbone_down(s), prev, widths[s], 3, 2, false});
    if (s + 3 >= n) plan.push_back({backbone_conv(s), widths[s], widths[s], 3, 1, false});
    prev = widths[s];
  }
  const int c3 = n >= 3 ? widths[n - 3] : 0;
  const int c4 = n >= 2 ? widths[n - 2] : 0;
  plan.push_back({"head.lateral", widths.empty() ? 0 : widths[n - 1], h, 1, 1, false});
  plan.push_back({"head.fuse_mid", h + c4, h, 3, 1, false});
  plan.push_back({"small.fuse", h + c3, h, 3, 1, false});
  plan.push_back({"medium.down", h, h, 3, 2, false});
  plan.push_back({"medium.fuse", 2 * h, h, 3, 1, false});
  plan.push_back({"large.down", h, h, 3, 2, false});
  plan.push_back({"large.fuse", 2 * h, h, 3, 1, false});
  for (Pathway p : kAllPathways) {
    const std::string name(pathway_name(p));
    plan.push_back({name + ".conv1", h, h, 3, 1, false});
    plan.push_back({name + ".conv2", h, h, 3, 1, false});
    plan.push_back({name + ".out", h, config.output_channels(), 1, 1, true});
  }
  return plan;
}

Index ModelState::parameter_count() const {
  Index total = 0;
  for (const auto& [name, t] : params) total += t.size();
  return total;
}

void ModelState::validate() const {
  config.validate();
  std::size_t expected = 0;
  for (const ConvSpec& spec : layer_plan(config)) {
    const std::pair<std::string, Shape> planned[] = {
        {spec.name + ".weight", {spec.out_channels, spec.in_channels, spec.k, spec.k}},
        {spec.name + ".bias", {spec.out_channels}}};
    for (const auto& [key, shape] : planned) {
      auto it = params.find(key);
      if (it == params.end()) throw Error("model state: missing parameter '" + key + "'");
      if (it->second.shape() != shape) {
        throw Error("model state: parameter '" + key + "' has shape " + to_string(it->second.shape()) +
                    ", planned " + to_string(shape));
      }
      ++expected;
    }
  }
  if (params.size() != expected) throw Error("model state: unexpected extra parameters");
}

ModelState build(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  ModelState state;
  state.config = config;
  std::mt19937_64 rng(seed);
  for (const ConvSpec& spec : layer_plan(config)) {
    const double fan_in = static_cast<double>(spec.in_channels) * spec.k * spec.k;
    const double gain = spec.linear ? 1.0 : 2.0 / (1.0 + config.leaky_alpha * config.leaky_alpha);
    std::normal_distribution<double> normal(0.0, std::sqrt(gain / fan_in));
    Tensor weight({spec.out_channels, spec.in_channels, spec.k, spec.k});
    for (Index n = 0; n < weight.size(); ++n) weight[n] = normal(rng);
    Tensor bias = Tensor::zeros({spec.out_channels});
    if (spec.linear) {
      for (int a = 0; a < config.anchors_per_cell; ++a) bias[channel_of(config, a, 4)] = kConfidenceBiasInit;
    }
    state.params.emplace(spec.name + ".weight", std::move(weight));
    state.params.emplace(spec.name + ".bias", std::move(bias));
  }
  return state;
}

TapeForward forward(Tape& tape, const ModelState& state, const Tensor& image,
                    const ForwardOptions& options) {
  const ModelConfig& config = state.config;
  const int size = config.input_size;
  if (image.rank() != 3 || image.dim(0) != 3 || image.dim(1) != size || image.dim(2) != size) {
    throw Error("forward: image must be [3," + std::to_string(size) + "," + std::to_string(size) +
                "], got " + to_string(image.shape()));
  }
  TapeForward fwd;
  std::map<std::string, ConvSpec> specs;
  for (ConvSpec& spec : layer_plan(config)) specs.emplace(spec.name, spec);

  auto param = [&](const std::string& key) {
    auto it = fwd.params.find(key);
    if (it != fwd.params.end()) return it->second;
    const Tensor& value = state.params.at(key);
    Var v = options.track_params ? tape.variable(value) : tape.constant(value);
    fwd.params.emplace(key, v);
    return v;
  };
  auto is_tap = [&](const std::string& name) {
    return std::find(config.tap_layers.begin(), config.tap_layers.end(), name) != config.tap_layers.end();
  };
  auto layer = [&](const std::string& name, Var input) {
    const ConvSpec& spec = specs.at(name);
    Var out = conv2d(input, param(name + ".weight"), param(name + ".bias"), spec.stride, spec.k / 2);
    if (!spec.linear) out = activation(out, Activation::leaky_relu(config.leaky_alpha));
    if (is_tap(name)) {
      if (options.tap_hook) out = options.tap_hook(name, out);
      fwd.taps[name] = out;
    }
    return out;
  };

  // Backbone: stride-2 stages; the last three also carry a stride-1 conv and
  // become the head inputs at strides[0], strides[1], strides[2].
  const std::size_t n = config.backbone_widths.size();
  std::vector<Var> skips;
  Var x = tape.constant(image);
  for (std::size_t s = 0; s < n; ++s) {
    x = layer(backbone_down(s), x);
    if (s + 3 >= n) {
      x = layer(backbone_conv(s), x);
      skips.push_back(x);
    }
  }
  const Var c3 = skips[0], c4 = skips[1], c5 = skips[2];

  // Top-down: coarse features are upsampled and concatenated with each finer
  // backbone tap; the small pathway therefore sees all three backbone paths.
  const Var lateral = layer("head.lateral", c5);
  const Var mid = layer("head.fuse_mid", concat_channels(upsample2x(lateral), c4));
  const Var small_fuse = layer("small.fuse", concat_channels(upsample2x(mid), c3));
  // Bottom-up: re-downsample and concatenate with the matching top-down map.
  const Var medium_fuse =
      layer("medium.fuse", concat_channels(layer("medium.down", small_fuse), mid));
  const Var large_fuse =
      layer("large.fuse", concat_channels(layer("large.down", medium_fuse), lateral));

  const std::array<Var, kPathways> fused{small_fuse, medium_fuse, large_fuse};
  for (Pathway p : kAllPathways) {
    const std::string name(pathway_name(p));
    Var y = layer(name + ".conv1", fused[static_cast<std::size_t>(index_of(p))]);
    y = layer(name + ".conv2", y);
    fwd.outputs[static_cast<std::size_t>(index_of(p))] = layer(name + ".out", y);
  }
  return fwd;
}

Inference infer(const ModelState& state, const Tensor& image) {
  Tape tape;
  ForwardOptions options;
  options.track_params = false;
  const TapeForward fwd = forward(tape, state, image, options);
  Inference result;
  for (Pathway p : kAllPathways) {
    const auto k = static_cast<std::size_t>(index_of(p));
    result.outputs[k] = {p, fwd.outputs[k].value(), state.config.stride(p)};
  }
  for (const auto& [name, v] : fwd.taps) result.taps.emplace(name, v.value());
  return result;
}

}  // namespace myolo
