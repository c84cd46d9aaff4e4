// Copyright 2026 The myolo Authors
// SPDX-License-Identifier: Apache-2.0

#include "myolo/saliency.hpp"

#include <algorithm>
#include <cmath>

#include "myolo/image_io.hpp"
#include "myolo/shapesdata.hpp"

namespace myolo {

std::string_view neuron_name(NeuronKind kind) {
  switch (kind) {
    case NeuronKind::x: return "x";
    case NeuronKind::y: return "y";
    case NeuronKind::w: return "w";
    case NeuronKind::h: return "h";
    case NeuronKind::c: return "c";
    case NeuronKind::p: return "p";
  }
  return "?";
}

NeuronKind parse_neuron(std::string_view name) {
  for (NeuronKind k : {NeuronKind::x, NeuronKind::y, NeuronKind::w, NeuronKind::h, NeuronKind::c, NeuronKind::p}) {
    if (neuron_name(k) == name) return k;
  }
  throw Error("unknown neuron kind '" + std::string(name) + "' (expected x|y|w|h|c|p)");
}

int NeuronSelector::field() const { return kind == NeuronKind::p ? 5 + class_id : static_cast<int>(kind); }

void NeuronSelector::validate(const ModelConfig& config) const {
  const int S = config.grid(cell.pathway);
  if (cell.i < 0 || cell.i >= S || cell.j < 0 || cell.j >= S) {
    throw Error("saliency: cell (" + std::to_string(cell.i) + "," + std::to_string(cell.j) + ") outside the " +
                std::to_string(S) + "x" + std::to_string(S) + " grid");
  }
  if (cell.anchor < 0 || cell.anchor >= config.anchors_per_cell) {
    throw Error("saliency: anchor " + std::to_string(cell.anchor) + " out of range");
  }
  if (kind == NeuronKind::p && (class_id < 0 || class_id >= config.num_classes)) {
    throw Error("saliency: p neuron needs a class id in [0," + std::to_string(config.num_classes) + ")");
  }
}

SaliencyMap saliency_single(const ModelState& state, const Tensor& image, const NeuronSelector& selector,
                            const std::string& tap_layer, double seed) {
  const ModelConfig& config = state.config;
  selector.validate(config);
  if (std::find(config.tap_layers.begin(), config.tap_layers.end(), tap_layer) == config.tap_layers.end()) {
    throw Error("saliency: unknown tap layer '" + tap_layer + "'");
  }
  Tape tape;
  ForwardOptions options;
  options.track_params = false;
  // The tap becomes a gradient-tracked leaf: its gradient is all backward needs.
  options.tap_hook = [&](const std::string& name, Var act) {
    return name == tap_layer ? tape.variable(act.value()) : act;
  };
  const TapeForward fwd = forward(tape, state, image, options);
  const Var out = fwd.outputs[static_cast<std::size_t>(index_of(selector.cell.pathway))];
  const int S = out.value().dim(1);
  const int channel = channel_of(config, selector.cell.anchor, selector.field());
  const Index flat = (static_cast<Index>(channel) * S + selector.cell.i) * S + selector.cell.j;
  tape.backward(element(out, flat), seed);

  const Var tap = fwd.taps.at(tap_layer);
  const Tensor& act = tap.value();
  const Tensor& grad = tap.grad();
  SaliencyMap map;
  map.tap_layer = tap_layer;
  map.selector = selector;
  map.n_images = 1;
  const int H = act.dim(1), W = act.dim(2);
  const Eigen::RowVectorXd mean =
      (act.channel_matrix().array() * grad.channel_matrix().array()).colwise().mean();
  map.values = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      mean.data(), H, W);
  return map;
}

namespace {

bool center_in_cell(const BBox& box, const CellAddress& cell, const ModelConfig& config) {
  const double s = config.stride(cell.pathway);
  return std::floor(box.cx / s) == cell.j && std::floor(box.cy / s) == cell.i;
}

}  // namespace

std::vector<std::string> select_images_for_cell(std::span<const Sample> dataset, int class_id,
                                                const CellAddress& cell, const ModelConfig& config) {
  std::vector<std::string> ids;
  for (const Sample& s : dataset) {
    const bool hit = std::any_of(s.annotations.begin(), s.annotations.end(), [&](const Annotation& a) {
      return a.class_id == class_id && center_in_cell(a.box, cell, config);
    });
    if (hit) ids.push_back(s.id);
  }
  return ids;
}

CellIndex::CellIndex(std::span<const Sample> dataset, const ModelConfig& config) {
  for (const Sample& s : dataset) {
    for (const Annotation& a : s.annotations) {
      for (Pathway p : kAllPathways) {
        const double stride = config.stride(p);
        const auto key = std::make_tuple(a.class_id, index_of(p), static_cast<int>(std::floor(a.box.cy / stride)),
                                         static_cast<int>(std::floor(a.box.cx / stride)));
        auto& ids = index_[key];
        if (ids.empty() || ids.back() != s.id) ids.push_back(s.id);
      }
    }
  }
}

std::vector<std::string> CellIndex::images(int class_id, const CellAddress& cell) const {
  auto it = index_.find(std::make_tuple(class_id, index_of(cell.pathway), cell.i, cell.j));
  return it == index_.end() ? std::vector<std::string>{} : it->second;
}

SaliencyMap saliency_mean(const ModelState& state, std::span<const Sample* const> images,
                          const NeuronSelector& selector, const std::string& tap_layer) {
  if (images.empty()) throw Error("saliency: no images to average");
  SaliencyMap total;
  for (const Sample* s : images) {
    SaliencyMap one = saliency_single(state, s->image, selector, tap_layer);
    if (total.image_ids.empty()) {
      total = std::move(one);
      total.image_ids.clear();
    } else {
      total.values += one.values;
    }
    total.image_ids.push_back(s->id);
  }
  total.n_images = static_cast<int>(images.size());
  total.values /= static_cast<double>(images.size());
  return total;
}

SaliencyMap saliency_averaged(const ModelState& state, std::span<const Sample> dataset, int class_id,
                              const CellAddress& cell, NeuronKind kind, const std::string& tap_layer, int n) {
  if (n < 1) throw Error("saliency: image count must be positive");
  if (is_border_cell(cell, state.config)) {
    throw Error("saliency: border cell (" + std::to_string(cell.i) + "," + std::to_string(cell.j) +
                ") is excluded from averaged saliency");
  }
  NeuronSelector selector{cell, kind, kind == NeuronKind::p ? class_id : -1};
  selector.validate(state.config);
  const auto ids = select_images_for_cell(dataset, class_id, cell, state.config);
  if (ids.empty()) throw Error("saliency: no image has class " + std::to_string(class_id) + " under the cell");
  std::vector<const Sample*> chosen;
  for (const Sample& s : dataset) {
    if (chosen.size() == static_cast<std::size_t>(n)) break;
    if (std::find(ids.begin(), ids.end(), s.id) != ids.end()) chosen.push_back(&s);
  }
  SaliencyMap map = saliency_mean(state, chosen, selector, tap_layer);
  map.shortfall = n - static_cast<int>(chosen.size());
  return map;
}

double MapMoments::rms_radius() const { return std::sqrt(var_row + var_col); }

MapMoments moments(const Eigen::MatrixXd& map) {
  const Eigen::ArrayXXd mass = map.array().abs();
  MapMoments m;
  m.mass = mass.sum();
  if (!(m.mass > 0)) throw Error("saliency: map is all zero");
  const Eigen::ArrayXd rows = Eigen::ArrayXd::LinSpaced(map.rows(), 0, static_cast<double>(map.rows() - 1));
  const Eigen::ArrayXd cols = Eigen::ArrayXd::LinSpaced(map.cols(), 0, static_cast<double>(map.cols() - 1));
  const Eigen::ArrayXd row_mass = mass.rowwise().sum();
  const Eigen::ArrayXd col_mass = mass.colwise().sum().transpose();
  m.row = (row_mass * rows).sum() / m.mass;
  m.col = (col_mass * cols).sum() / m.mass;
  m.var_row = (row_mass * (rows - m.row).square()).sum() / m.mass;
  m.var_col = (col_mass * (cols - m.col).square()).sum() / m.mass;
  return m;
}

double concentration(const SaliencyMap& map) { return moments(map.values).rms_radius(); }

std::array<double, 2> project_to_tap(const CellAddress& cell, const ModelConfig& config, int tap_rows, int tap_cols) {
  const double stride = config.stride(cell.pathway);
  const double row_stride = static_cast<double>(config.input_size) / tap_rows;
  const double col_stride = static_cast<double>(config.input_size) / tap_cols;
  return {(cell.i + 0.5) * stride / row_stride - 0.5, (cell.j + 0.5) * stride / col_stride - 0.5};
}

Json to_json(const NeuronSelector& s) {
  Json j{{"pathway", pathway_name(s.cell.pathway)},
         {"i", s.cell.i},
         {"j", s.cell.j},
         {"anchor", s.cell.anchor},
         {"neuron", neuron_name(s.kind)}};
  if (s.kind == NeuronKind::p) j["class_id"] = s.class_id;
  return j;
}

Json to_json(const SaliencyMap& map) {
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(map.values.size()));
  for (Index r = 0; r < map.values.rows(); ++r)
    for (Index c = 0; c < map.values.cols(); ++c) values.push_back(map.values(r, c));
  return Json{{"layer", map.tap_layer},
              {"shape", {map.values.rows(), map.values.cols()}},
              {"selector", to_json(map.selector)},
              {"n_images", map.n_images},
              {"image_ids", map.image_ids},
              {"shortfall", map.shortfall},
              {"values", values}};
}

std::array<std::uint8_t, 3> viridis(std::uint8_t level) {
  static constexpr std::array<std::array<double, 3>, 9> kStops{{{68, 1, 84},
                                                                {71, 45, 123},
                                                                {59, 82, 139},
                                                                {44, 114, 142},
                                                                {33, 145, 140},
                                                                {40, 174, 128},
                                                                {94, 201, 98},
                                                                {173, 220, 48},
                                                                {253, 231, 37}}};
  const double t = level / 255.0 * 8.0;
  const std::size_t k = std::min<std::size_t>(7, static_cast<std::size_t>(t));
  const double f = t - static_cast<double>(k);
  std::array<std::uint8_t, 3> rgb{};
  for (std::size_t c = 0; c < 3; ++c) {
    rgb[c] = static_cast<std::uint8_t>(std::lround(kStops[k][c] * (1 - f) + kStops[k + 1][c] * f));
  }
  return rgb;
}

std::string heatmap_png(const SaliencyMap& map) {
  const Eigen::ArrayXXd mag = map.values.array().abs();
  const double lo = mag.minCoeff(), hi = mag.maxCoeff();
  const int H = static_cast<int>(mag.rows()), W = static_cast<int>(mag.cols());
  std::vector<std::uint8_t> rgb(static_cast<std::size_t>(H) * W * 3);
  for (int r = 0; r < H; ++r) {
    for (int c = 0; c < W; ++c) {
      const double t = hi > lo ? (mag(r, c) - lo) / (hi - lo) : 0.0;
      const auto color = viridis(static_cast<std::uint8_t>(std::lround(t * 255.0)));
      std::copy(color.begin(), color.end(), rgb.begin() + (static_cast<std::ptrdiff_t>(r) * W + c) * 3);
    }
  }
  return encode_png_rgb(W, H, rgb);
}

}  // namespace myolo
