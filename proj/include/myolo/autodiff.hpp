// Copyright 2026 The myolo Authors
// SPDX-License-Identifier: Apache-2.0

// Reverse-mode automatic differentiation over dense tensors.
//
// A Tape records every operation in execution order, so node ids are already a
// topological order and backward is a single reverse sweep. Var is a cheap
// handle (tape pointer + node id); a tape must outlive its Vars.

#pragma once

#include <deque>
#include <functional>
#include <vector>

#include "myolo/tensor.hpp"

namespace myolo {

class Tape;

class Var {
 public:
  Var() = default;

  Tape& tape() const { return *tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }
  const Tensor& value() const;
  const Tensor& grad() const;
  const Shape& shape() const { return value().shape(); }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  /// Propagates the gradient held by node `self` into its inputs.
  using Backprop = std::function<void(Tape&, int self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that never receives a gradient (images, fixed targets).
  Var constant(Tensor value);
  /// Gradient-tracked leaf (parameters, probe inputs).
  Var variable(Tensor value);
  /// Appends an operation node. `inputs` must already be on this tape.
  Var record(Tensor value, const std::vector<Var>& inputs, Backprop backprop);

  const Tensor& value(int id) const { return nodes_.at(static_cast<std::size_t>(id)).value; }
  const Tensor& grad(int id) const;
  bool requires_grad(int id) const { return nodes_.at(static_cast<std::size_t>(id)).requires_grad; }

  /// Accumulation target for a backprop closure writing into input `id`.
  Tensor& grad_slot(int id);

  /// Seeds d(output)/d(output) = seed and sweeps the tape in reverse. Every
  /// ancestor of `output` is visited exactly once; all other nodes end with a
  /// zero gradient. Calling backward again discards the previous gradients.
  void backward(Var output, double seed = 1.0);

  std::size_t size() const { return nodes_.size(); }
  /// Operations whose backprop ran during the most recent backward().
  std::size_t last_backward_visits() const { return last_visits_; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<int> inputs;
    Backprop backprop;
    bool requires_grad = false;
  };

  Var push(Node node);

  std::deque<Node> nodes_;  // stable references: value() stays valid as the tape grows
  std::size_t last_visits_ = 0;
};

enum class ActivationKind { leaky_relu, sigmoid, exp };

struct Activation {
  ActivationKind kind = ActivationKind::leaky_relu;
  double alpha = 0.1;

  static Activation leaky_relu(double alpha = 0.1) { return {ActivationKind::leaky_relu, alpha}; }
  static Activation sigmoid() { return {ActivationKind::sigmoid, 0.0}; }
  static Activation exp() { return {ActivationKind::exp, 0.0}; }
};

Var conv2d(Var input, Var kernels, Var bias, int stride, int pad);
Var activation(Var input, Activation act);
Var upsample2x(Var input);
Var concat_channels(Var a, Var b);
Var slice_channels(Var input, int begin, int count);

Var sum(Var input);
/// Single entry of `input` (flat row-major index) as a [1] tensor.
Var element(Var input, Index flat_index);
Var scale(Var input, double factor);
Var add(Var a, Var b);
/// sum(weights * input); a fixed linear functional, handy as a probe loss.
Var dot(Var input, const Tensor& weights);

}  // namespace myolo
