// Copyright 2026 The myolo Authors
// SPDX-License-Identifier: Apache-2.0

#include "myolo/assign.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace myolo {

Annotation clip_to_image(const Annotation& ann, int image_size) {
  const double limit = image_size;
  const double x0 = std::clamp(ann.box.left(), 0.0, limit);
  const double x1 = std::clamp(ann.box.right(), 0.0, limit);
  const double y0 = std::clamp(ann.box.top(), 0.0, limit);
  const double y1 = std::clamp(ann.box.bottom(), 0.0, limit);
  return {{(x0 + x1) / 2, (y0 + y1) / 2, x1 - x0, y1 - y0}, ann.class_id};
}

CellAddress center_cell(const BBox& box, const ModelConfig& config, Pathway p) {
  const double stride = config.stride(p);
  const int last = config.grid(p) - 1;
  CellAddress cell;
  cell.pathway = p;
  cell.i = std::clamp(static_cast<int>(std::floor(box.cy / stride)), 0, last);
  cell.j = std::clamp(static_cast<int>(std::floor(box.cx / stride)), 0, last);
  return cell;
}

std::vector<CellAddress> select_positive_anchors(const Annotation& ann, const AnchorSet& priors,
                                                 const ModelConfig& config, double threshold) {
  std::vector<CellAddress> positives;
  CellAddress best;
  double best_iou = -1.0;
  for (Pathway p : kAllPathways) {
    CellAddress cell = center_cell(ann.box, config, p);
    for (int a = 0; a < priors.anchors_per_pathway(); ++a) {
      cell.anchor = a;
      const double overlap = assignment_iou(ann.box, priors.at(p, a));
      if (overlap > threshold) positives.push_back(cell);
      if (overlap > best_iou) {
        best_iou = overlap;
        best = cell;
      }
    }
  }
  if (positives.empty()) positives.push_back(best);
  return positives;
}

std::vector<double> soft_one_hot(int class_id, int num_classes, double eps) {
  if (class_id < 0 || class_id >= num_classes) {
    throw Error("soft_one_hot: class id " + std::to_string(class_id) + " outside [0," +
                std::to_string(num_classes) + ")");
  }
  if (num_classes == 1) return {1.0};
  std::vector<double> target(static_cast<std::size_t>(num_classes), eps / (num_classes - 1));
  target[static_cast<std::size_t>(class_id)] = 1.0 - eps;
  return target;
}

TargetTensor build_targets(std::span<const Annotation> annotations, const ModelConfig& config,
                           const AnchorSet& priors, const AssignOptions& options) {
  if (priors.anchors_per_pathway() != config.anchors_per_cell) {
    throw Error("build_targets: prior set has " + std::to_string(priors.anchors_per_pathway()) +
                " anchors per pathway, config expects " + std::to_string(config.anchors_per_cell));
  }
  const int A = config.anchors_per_cell;
  const int C = config.num_classes;
  TargetTensor targets;
  for (Pathway p : kAllPathways) {
    const int S = config.grid(p);
    targets.pathways[static_cast<std::size_t>(index_of(p))] = {
        Tensor::zeros({config.output_channels(), S, S}), Tensor::zeros({A, S, S})};
  }

  // Larger objects claim contested (cell, anchor) slots first.
  std::vector<std::size_t> order(annotations.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return annotations[a].box.area() > annotations[b].box.area();
  });

  for (std::size_t idx : order) {
    const Annotation& ann = annotations[idx];
    if (!(ann.box.w >= options.min_extent && ann.box.h >= options.min_extent)) {
      ++targets.skipped_degenerate;
      continue;
    }
    const std::vector<double> classes = soft_one_hot(ann.class_id, C, options.smoothing);
    for (const CellAddress& cell : select_positive_anchors(ann, priors, config, options.threshold)) {
      PathwayTarget& t = targets.pathways[static_cast<std::size_t>(index_of(cell.pathway))];
      if (t.mask(cell.anchor, cell.i, cell.j) != 0.0) continue;
      t.mask(cell.anchor, cell.i, cell.j) = 1.0;
      const auto raw = encode(ann.box, cell, priors.at(cell.pathway, cell.anchor),
                              static_cast<double>(config.stride(cell.pathway)));
      const double coords[4] = {raw.tx, raw.ty, raw.tw, raw.th};
      for (int f = 0; f < 4; ++f) t.values(channel_of(config, cell.anchor, f), cell.i, cell.j) = coords[f];
      t.values(channel_of(config, cell.anchor, 4), cell.i, cell.j) = 1.0;
      for (int k = 0; k < C; ++k) {
        t.values(channel_of(config, cell.anchor, 5 + k), cell.i, cell.j) = classes[static_cast<std::size_t>(k)];
      }
    }
  }
  return targets;
}

}  // namespace myolo
