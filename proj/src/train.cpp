// Copyright 2026 The myolo Authors
// SPDX-License-Identifier: Apache-2.0

#include "myolo/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace myolo {

void TrainConfig::validate() const {
  if (epochs < 1) throw Error("train config: epochs must be positive");
  if (batch_size < 1) throw Error("train config: batch_size must be positive");
  if (!(learning_rate > 0)) throw Error("train config: learning_rate must be positive");
  if (!(decay_factor > 0)) throw Error("train config: decay_factor must be positive");
  weights.validate();
}

double TrainConfig::learning_rate_at(int epoch) const {
  const int decay_epoch = static_cast<int>(std::floor(decay_at * epochs));
  return epoch >= decay_epoch ? learning_rate * decay_factor : learning_rate;
}

Gradients compute_gradients(const ModelState& state, const Tensor& image, const TargetTensor& targets,
                            const LossWeights& weights) {
  Tape tape;
  const TapeForward fwd = forward(tape, state, image);
  const LossResult loss = yolo_loss(fwd.outputs, targets, state.config, weights);
  tape.backward(loss.total);
  Gradients result;
  result.loss = loss.breakdown;
  for (const auto& [name, v] : fwd.params) result.params.emplace(name, v.grad());
  return result;
}

Adam::Adam(const ModelState& state, double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& [name, t] : state.params) {
    m_.emplace(name, Tensor::zeros(t.shape()));
    v_.emplace(name, Tensor::zeros(t.shape()));
  }
}

void Adam::step(ModelState& state, const std::map<std::string, Tensor>& grads, double learning_rate) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, t_);
  const double c2 = 1.0 - std::pow(beta2_, t_);
  for (auto& [name, param] : state.params) {
    const auto& g = grads.at(name).values().array();
    auto m = m_.at(name).values().array();
    auto v = v_.at(name).values().array();
    m = beta1_ * m + (1.0 - beta1_) * g;
    v = beta2_ * v + (1.0 - beta2_) * g.square();
    param.values().array() -= learning_rate * (m / c1) / ((v / c2).sqrt() + eps_);
  }
}

TrainResult train(ModelState model, std::span<const Sample> dataset, const AnchorSet& priors,
                  const TrainConfig& tc, const EpochCallback& on_epoch) {
  tc.validate();
  if (dataset.empty()) throw Error("train: dataset is empty");
  const ModelConfig& config = model.config;

  std::vector<TargetTensor> targets;
  targets.reserve(dataset.size());
  for (const Sample& s : dataset) targets.push_back(build_targets(s.annotations, config, priors, tc.assign));

  TrainResult result;
  result.state = model;
  Adam adam(model, tc.beta1, tc.beta2, tc.adam_eps);
  std::mt19937_64 rng(tc.seed);
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    const double lr = tc.learning_rate_at(epoch);
    LossBreakdown epoch_loss;
    for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(tc.batch_size)) {
      const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(tc.batch_size));
      std::map<std::string, Tensor> batch_grads;
      for (const auto& [name, t] : model.params) batch_grads.emplace(name, Tensor::zeros(t.shape()));
      for (std::size_t n = begin; n < end; ++n) {
        const Gradients g = compute_gradients(model, dataset[order[n]].image, targets[order[n]], tc.weights);
        if (!std::isfinite(g.loss.total)) {
          result.diverged = true;
          result.message = "loss became non-finite in epoch " + std::to_string(epoch) +
                           "; keeping parameters from the last finite epoch";
          return result;
        }
        epoch_loss += g.loss;
        for (auto& [name, acc] : batch_grads) acc.values() += g.params.at(name).values();
      }
      for (auto& [name, acc] : batch_grads) acc.values() /= static_cast<double>(end - begin);
      adam.step(model, batch_grads, lr);
      ++result.steps;
    }
    epoch_loss *= 1.0 / static_cast<double>(dataset.size());
    const EpochLoss record{epoch, epoch_loss};
    result.history.push_back(record);
    bool finite = true;
    for (const auto& [name, t] : model.params) finite = finite && t.all_finite();
    if (!finite) {
      result.diverged = true;
      result.message = "parameters became non-finite in epoch " + std::to_string(epoch);
      return result;
    }
    result.state = model;
    if (on_epoch) on_epoch(record);
  }
  return result;
}

std::string loss_curve_csv(std::span<const EpochLoss> history) {
  std::ostringstream os;
  os.precision(17);
  os << "epoch,total,coord,conf_pos,conf_neg,class\n";
  for (const EpochLoss& e : history) {
    os << e.epoch << ',' << e.loss.total << ',' << e.loss.coord << ',' << e.loss.conf_pos << ','
       << e.loss.conf_neg << ',' << e.loss.cls << '\n';
  }
  return os.str();
}

}  // namespace myolo
