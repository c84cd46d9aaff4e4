// Copyright 2026 The myolo Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <span>
#include <vector>

#include "myolo/boxes.hpp"
#include "myolo/model.hpp"
#include "myolo/serialize.hpp"

namespace myolo {

struct Detection {
  BBox box;
  int class_id = 0;
  double class_prob = 0;
  double confidence = 0;
  CellAddress source;

  double score() const { return confidence * class_prob; }
};

/// Sum over pathways of grid^2 * anchors: the number of (cell, anchor)
/// classification/regression pairs the head evaluates per image.
long count_proposals(std::span<const int> grids, int anchors_per_cell);
long count_proposals(const ModelConfig& config);

/// One detection per (pathway, cell, anchor), ordered pathway, row-major cell, anchor.
std::vector<Detection> decode_all(const std::array<PathwayOutput, kPathways>& outputs,
                                  const AnchorSet& priors, int num_classes);

/// Cell/anchor with the highest raw confidence logit. Ranked before the
/// sigmoid, which rounds confident cells to exactly 1.0. Ties keep the first
/// in decode order.
struct ConfidencePeak {
  CellAddress cell;
  double logit = 0;
  double confidence() const { return sigmoid(logit); }
};

ConfidencePeak confidence_peak(const std::array<PathwayOutput, kPathways>& outputs, int anchors_per_cell);

enum class ScoreMode { confidence_times_class, confidence_only };

struct NmsOptions {
  double conf_threshold = 0.25;
  double iou_threshold = 0.45;
  ScoreMode score = ScoreMode::confidence_times_class;
};

/// Greedy per-class suppression: drop detections scoring below
/// conf_threshold, visit the rest by descending confidence (stable), keep one
/// iff its IOU with every kept detection of the same class is <= iou_threshold.
std::vector<Detection> nms(std::span<const Detection> detections, const NmsOptions& options = {});

/// Distinct cells whose most confident anchor exceeds `conf_threshold` and
/// whose box overlaps the ground truth with IOU > `iou_threshold`.
int active_cell_census(std::span<const Detection> detections, const BBox& object, double conf_threshold,
                       double iou_threshold = 0.5);

Json to_json(const Detection& d);
Json to_json(std::span<const Detection> detections);

}  // namespace myolo
