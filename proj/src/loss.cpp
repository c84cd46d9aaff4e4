// Copyright 2026 The myolo Authors
// SPDX-License-Identifier: Apache-2.0

#include "myolo/loss.hpp"

#include <cmath>
#include <memory>

namespace myolo {

namespace {

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double binary_entropy(double y) {
  double h = 0.0;
  if (y > 0.0) h -= y * std::log(y);
  if (y < 1.0) h -= (1.0 - y) * std::log(1.0 - y);
  return h;
}

void check_shapes(const std::array<const Tensor*, kPathways>& outputs, const TargetTensor& targets,
                  const ModelConfig& config) {
  for (Pathway p : kAllPathways) {
    const auto k = static_cast<std::size_t>(index_of(p));
    const Shape expected{config.output_channels(), config.grid(p), config.grid(p)};
    if (outputs[k]->shape() != expected) {
      throw Error("yolo_loss: " + std::string(pathway_name(p)) + " output shape " +
                  to_string(outputs[k]->shape()) + ", expected " + to_string(expected));
    }
    if (targets.pathways[k].values.shape() != expected) {
      throw Error("yolo_loss: " + std::string(pathway_name(p)) + " target shape " +
                  to_string(targets.pathways[k].values.shape()) + ", expected " + to_string(expected));
    }
    const Shape mask_shape{config.anchors_per_cell, config.grid(p), config.grid(p)};
    if (targets.pathways[k].mask.shape() != mask_shape) {
      throw Error("yolo_loss: " + std::string(pathway_name(p)) + " mask shape " +
                  to_string(targets.pathways[k].mask.shape()) + ", expected " + to_string(mask_shape));
    }
  }
}

/// Loss value and (optionally) d loss / d raw for every pathway.
LossBreakdown evaluate(const std::array<const Tensor*, kPathways>& outputs, const TargetTensor& targets,
                       const ModelConfig& config, const LossWeights& w,
                       std::array<Tensor, kPathways>* grads) {
  check_shapes(outputs, targets, config);
  LossBreakdown loss;
  const int A = config.anchors_per_cell;
  const int C = config.num_classes;
  for (Pathway p : kAllPathways) {
    const auto k = static_cast<std::size_t>(index_of(p));
    const Tensor& raw = *outputs[k];
    const Tensor& target = targets.pathways[k].values;
    const Tensor& mask = targets.pathways[k].mask;
    Tensor* grad = nullptr;
    if (grads) {
      (*grads)[k] = Tensor::zeros(raw.shape());
      grad = &(*grads)[k];
    }
    const int S = config.grid(p);
    for (int a = 0; a < A; ++a) {
      const int conf = channel_of(config, a, 4);
      for (int i = 0; i < S; ++i) {
        for (int j = 0; j < S; ++j) {
          const double tc = raw(conf, i, j);
          if (mask(a, i, j) == 0.0) {
            loss.conf_neg += w.conf_neg * softplus(tc);
            if (grad) (*grad)(conf, i, j) = w.conf_neg * sigmoid(tc);
            continue;
          }
          for (int f = 0; f < 4; ++f) {
            const int ch = channel_of(config, a, f);
            const double diff = raw(ch, i, j) - target(ch, i, j);
            loss.coord += w.coord * diff * diff;
            if (grad) (*grad)(ch, i, j) = 2.0 * w.coord * diff;
          }
          loss.conf_pos += w.conf_pos * softplus(-tc);
          if (grad) (*grad)(conf, i, j) = -w.conf_pos * sigmoid(-tc);
          for (int c = 0; c < C; ++c) {
            const int ch = channel_of(config, a, 5 + c);
            const double z = raw(ch, i, j);
            const double y = target(ch, i, j);
            loss.cls += w.cls * std::max(0.0, softplus(z) - y * z - binary_entropy(y));
            if (grad) (*grad)(ch, i, j) = w.cls * (sigmoid(z) - y);
          }
        }
      }
    }
  }
  loss.total = loss.coord + loss.conf_pos + loss.conf_neg + loss.cls;
  return loss;
}

}  // namespace

void LossWeights::validate() const {
  if (!(coord > 0 && conf_pos > 0 && conf_neg > 0 && cls > 0)) {
    throw Error("loss weights: all weights must be positive");
  }
}

LossBreakdown& LossBreakdown::operator+=(const LossBreakdown& o) {
  total += o.total;
  coord += o.coord;
  conf_pos += o.conf_pos;
  conf_neg += o.conf_neg;
  cls += o.cls;
  return *this;
}

LossBreakdown& LossBreakdown::operator*=(double k) {
  total *= k;
  coord *= k;
  conf_pos *= k;
  conf_neg *= k;
  cls *= k;
  return *this;
}

LossResult yolo_loss(const std::array<Var, kPathways>& outputs, const TargetTensor& targets,
                     const ModelConfig& config, const LossWeights& weights) {
  weights.validate();
  const std::array<const Tensor*, kPathways> values{&outputs[0].value(), &outputs[1].value(),
                                                    &outputs[2].value()};
  auto grads = std::make_shared<std::array<Tensor, kPathways>>();
  const LossBreakdown breakdown = evaluate(values, targets, config, weights, grads.get());
  const std::array<int, kPathways> ids{outputs[0].id(), outputs[1].id(), outputs[2].id()};
  Tape& tape = outputs[0].tape();
  Var total = tape.record(Tensor({1}, {breakdown.total}), {outputs[0], outputs[1], outputs[2]},
                          [ids, grads](Tape& t, int self) {
                            const double seed = t.grad(self)[0];
                            for (std::size_t k = 0; k < ids.size(); ++k) {
                              if (t.requires_grad(ids[k])) {
                                t.grad_slot(ids[k]).values() += seed * (*grads)[k].values();
                              }
                            }
                          });
  return {total, breakdown};
}

LossBreakdown yolo_loss_value(const std::array<Tensor, kPathways>& outputs, const TargetTensor& targets,
                              const ModelConfig& config, const LossWeights& weights) {
  weights.validate();
  return evaluate({&outputs[0], &outputs[1], &outputs[2]}, targets, config, weights, nullptr);
}

}  // namespace myolo
