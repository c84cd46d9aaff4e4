// Copyright 2026 The myolo Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "myolo/assign.hpp"
#include "myolo/loss.hpp"
#include "myolo/model.hpp"

namespace myolo {

struct TrainConfig {
  int epochs = 60;
  int batch_size = 8;
  double learning_rate = 1e-3;
  double decay_at = 0.7;  // fraction of epochs after which lr *= decay_factor
  double decay_factor = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  LossWeights weights;
  AssignOptions assign;
  std::uint64_t seed = 1;

  void validate() const;
  double learning_rate_at(int epoch) const;
};

struct Sample {
  std::string id;
  Tensor image;  // [3, H, W] in [0, 1]
  std::vector<Annotation> annotations;
};

struct EpochLoss {
  int epoch = 0;
  LossBreakdown loss;  // mean per image
};

struct TrainResult {
  ModelState state;  // last good parameters
  std::vector<EpochLoss> history;
  int steps = 0;
  bool diverged = false;
  std::string message;
};

struct Gradients {
  LossBreakdown loss;
  std::map<std::string, Tensor> params;
};

/// Loss and parameter gradients for one image.
Gradients compute_gradients(const ModelState& state, const Tensor& image, const TargetTensor& targets,
                            const LossWeights& weights);

class Adam {
 public:
  Adam(const ModelState& state, double beta1, double beta2, double eps);
  /// In-place update of `state` from accumulated gradients.
  void step(ModelState& state, const std::map<std::string, Tensor>& grads, double learning_rate);

 private:
  std::map<std::string, Tensor> m_;
  std::map<std::string, Tensor> v_;
  double beta1_, beta2_, eps_;
  int t_ = 0;
};

using EpochCallback = std::function<void(const EpochLoss&)>;

/// Minibatch Adam over `dataset`; shuffling is driven by tc.seed so runs are
/// reproducible. A non-finite loss stops training and returns the parameters
/// from the end of the last finite epoch with `diverged` set.
TrainResult train(ModelState model, std::span<const Sample> dataset, const AnchorSet& priors,
                  const TrainConfig& tc, const EpochCallback& on_epoch = {});

/// "epoch,total,coord,conf_pos,conf_neg,class" rows.
std::string loss_curve_csv(std::span<const EpochLoss> history);

}  // namespace myolo
