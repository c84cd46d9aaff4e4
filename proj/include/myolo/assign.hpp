// Copyright 2026 The myolo Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <span>
#include <vector>

#include "myolo/boxes.hpp"
#include "myolo/model.hpp"

namespace myolo {

struct Annotation {
  BBox box;
  int class_id = 0;
};

/// Clips a box to [0, image_size) on both axes.
Annotation clip_to_image(const Annotation& ann, int image_size);

struct PathwayTarget {
  Tensor values;  // [A*(5+C), S, S]
  Tensor mask;    // [A, S, S], 1 at positive anchors
};

struct TargetTensor {
  std::array<PathwayTarget, kPathways> pathways;
  int skipped_degenerate = 0;
};

struct AssignOptions {
  double threshold = 0.3;   // strict: wh_iou must exceed it
  double smoothing = 0.05;  // soft one-hot epsilon
  double min_extent = 1.0;  // boxes thinner than this (px) are skipped
};

/// IOU used to match a ground-truth box against an anchor prior. Shape-only.
inline double assignment_iou(const BBox& gt, const AnchorPrior& prior) { return wh_iou(gt, prior); }

/// Cell containing the box center on pathway p (floor indexing, clamped to the grid).
CellAddress center_cell(const BBox& box, const ModelConfig& config, Pathway p);

/// The (pathway, anchor) candidates at the object's center cells whose
/// assignment_iou exceeds `threshold`; if none does, the single best one
/// (ties resolved small->large, then by anchor index). Never empty.
std::vector<CellAddress> select_positive_anchors(const Annotation& ann, const AnchorSet& priors,
                                                 const ModelConfig& config, double threshold = 0.3);

/// True class gets 1 - eps, the others eps / (C - 1). With one class, {1}.
std::vector<double> soft_one_hot(int class_id, int num_classes, double eps);

TargetTensor build_targets(std::span<const Annotation> annotations, const ModelConfig& config,
                           const AnchorSet& priors, const AssignOptions& options = {});

}  // namespace myolo
