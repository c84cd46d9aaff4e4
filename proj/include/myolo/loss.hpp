// Copyright 2026 The myolo Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>

#include "myolo/assign.hpp"
#include "myolo/autodiff.hpp"
#include "myolo/model.hpp"

namespace myolo {

struct LossWeights {
  double coord = 5.0;
  double conf_pos = 1.0;
  double conf_neg = 0.5;
  double cls = 1.0;

  void validate() const;
};

/// Weighted contribution of each term; the four terms sum to `total`.
struct LossBreakdown {
  double total = 0;
  double coord = 0;
  double conf_pos = 0;
  double conf_neg = 0;
  double cls = 0;

  LossBreakdown& operator+=(const LossBreakdown& other);
  LossBreakdown& operator*=(double k);
};

struct LossResult {
  Var total;  // [1]
  LossBreakdown breakdown;
};

/// Detection loss summed over pathways:
///   coord    squared error of raw (tx,ty,tw,th) against encoded targets at positives
///   conf_pos binary cross-entropy of sigmoid(tc) against 1 at positives
///   conf_neg binary cross-entropy of sigmoid(tc) against 0 elsewhere
///   cls      cross-entropy of sigmoid(class logits) against the soft one-hot,
///            minus the target's own entropy (so the optimum is exactly 0)
/// Recorded as one tape node with an analytic gradient.
LossResult yolo_loss(const std::array<Var, kPathways>& outputs, const TargetTensor& targets,
                     const ModelConfig& config, const LossWeights& weights);

/// Plain-value version of yolo_loss for callers without a tape.
LossBreakdown yolo_loss_value(const std::array<Tensor, kPathways>& outputs, const TargetTensor& targets,
                              const ModelConfig& config, const LossWeights& weights);

}  // namespace myolo
