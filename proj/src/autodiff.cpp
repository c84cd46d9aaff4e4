// Copyright 2026 The myolo Authors
// SPDX-License-Identifier: Apache-2.0

#include "myolo/autodiff.hpp"

#include <cmath>
#include <memory>

#include "myolo/kernels.hpp"

namespace myolo {

const Tensor& Var::value() const { return tape_->value(id_); }
const Tensor& Var::grad() const { return tape_->grad(id_); }

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::constant(Tensor value) {
  Node node;
  node.value = std::move(value);
  return push(std::move(node));
}

Var Tape::variable(Tensor value) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = true;
  return push(std::move(node));
}

Var Tape::record(Tensor value, const std::vector<Var>& inputs, Backprop backprop) {
  Node node;
  node.value = std::move(value);
  node.backprop = std::move(backprop);
  for (const Var& in : inputs) {
    if (&in.tape() != this) throw Error("tape: operation mixes variables from different tapes");
    node.inputs.push_back(in.id());
    node.requires_grad = node.requires_grad || requires_grad(in.id());
  }
  return push(std::move(node));
}

const Tensor& Tape::grad(int id) const {
  const Node& node = nodes_.at(static_cast<std::size_t>(id));
  if (node.grad.empty()) throw Error("tape: gradient requested before backward()");
  return node.grad;
}

Tensor& Tape::grad_slot(int id) { return nodes_.at(static_cast<std::size_t>(id)).grad; }

void Tape::backward(Var output, double seed) {
  if (&output.tape() != this) throw Error("backward: output belongs to a different tape");
  const Tensor& out = value(output.id());
  if (out.rank() != 1 || out.dim(0) != 1) {
    throw Error("backward: seed must be a scalar [1] tensor, got " + to_string(out.shape()));
  }
  std::vector<char> ancestor(nodes_.size(), 0);
  ancestor[static_cast<std::size_t>(output.id())] = 1;
  for (int i = output.id(); i >= 0; --i) {
    if (!ancestor[static_cast<std::size_t>(i)]) continue;
    for (int in : nodes_[static_cast<std::size_t>(i)].inputs) ancestor[static_cast<std::size_t>(in)] = 1;
  }
  for (Node& node : nodes_) node.grad = Tensor::zeros(node.value.shape());
  nodes_[static_cast<std::size_t>(output.id())].grad[0] = seed;

  last_visits_ = 0;
  for (int i = output.id(); i >= 0; --i) {
    Node& node = nodes_[static_cast<std::size_t>(i)];
    if (!ancestor[static_cast<std::size_t>(i)] || !node.backprop || !node.requires_grad) continue;
    node.backprop(*this, i);
    ++last_visits_;
  }
}

namespace {

Tape& common_tape(std::initializer_list<Var> vars) {
  Tape* tape = nullptr;
  for (const Var& v : vars) {
    if (!v.valid()) throw Error("tape: operation on an unbound variable");
    if (tape && tape != &v.tape()) throw Error("tape: operation mixes variables from different tapes");
    tape = &v.tape();
  }
  return *tape;
}

}  // namespace

Var conv2d(Var input, Var kernels, Var bias, int stride, int pad) {
  Tape& tape = common_tape({input, kernels, bias});
  auto col = std::make_shared<RowMatrix<double>>();
  Tensor out = kernels::conv2d_forward(input.value(), kernels.value(), bias.value(), stride, pad,
                                       col.get());
  const int in_id = input.id(), k_id = kernels.id(), b_id = bias.id();
  return tape.record(std::move(out), {input, kernels, bias},
                     [=](Tape& t, int self) {
                       const bool need_input = t.requires_grad(in_id);
                       auto g = kernels::conv2d_backward(t.value(in_id), t.value(k_id), *col,
                                                         t.grad(self), stride, pad, need_input);
                       if (need_input) t.grad_slot(in_id).values() += g.input.values();
                       if (t.requires_grad(k_id)) t.grad_slot(k_id).values() += g.kernels.values();
                       if (t.requires_grad(b_id)) t.grad_slot(b_id).values() += g.bias.values();
                     });
}

Var activation(Var input, Activation act) {
  Tape& tape = common_tape({input});
  const Tensor& x = input.value();
  if (!x.all_finite()) throw Error("activation: non-finite input");
  Tensor y(x.shape());
  const double alpha = act.alpha;
  switch (act.kind) {
    case ActivationKind::leaky_relu:
      y.values() = x.values().unaryExpr([alpha](double v) { return v > 0.0 ? v : alpha * v; });
      break;
    case ActivationKind::sigmoid:
      y.values() = x.values().unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
      break;
    case ActivationKind::exp:
      y.values() = x.values().array().exp().matrix();
      break;
  }
  const int in_id = input.id();
  const ActivationKind kind = act.kind;
  return tape.record(std::move(y), {input}, [=](Tape& t, int self) {
    const auto& gy = t.grad(self).values().array();
    const auto& xv = t.value(in_id).values().array();
    const auto& yv = t.value(self).values().array();
    auto gx = t.grad_slot(in_id).values().array();
    switch (kind) {
      case ActivationKind::leaky_relu:
        gx += gy * (xv > 0.0).select(Eigen::ArrayXd::Ones(xv.size()), alpha);
        break;
      case ActivationKind::sigmoid:
        gx += gy * yv * (1.0 - yv);
        break;
      case ActivationKind::exp:
        gx += gy * yv;
        break;
    }
  });
}

Var upsample2x(Var input) {
  Tape& tape = common_tape({input});
  const int in_id = input.id();
  return tape.record(kernels::upsample2x_forward(input.value()), {input}, [=](Tape& t, int self) {
    t.grad_slot(in_id).values() += kernels::upsample2x_backward(t.grad(self)).values();
  });
}

Var concat_channels(Var a, Var b) {
  Tape& tape = common_tape({a, b});
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 3 || bv.rank() != 3) throw Error("concat_channels: inputs must be [C,H,W]");
  if (av.dim(1) != bv.dim(1)) {
    throw Error("concat_channels: height (dim 1) mismatch " + std::to_string(av.dim(1)) + " vs " +
                std::to_string(bv.dim(1)));
  }
  if (av.dim(2) != bv.dim(2)) {
    throw Error("concat_channels: width (dim 2) mismatch " + std::to_string(av.dim(2)) + " vs " +
                std::to_string(bv.dim(2)));
  }
  Tensor out({av.dim(0) + bv.dim(0), av.dim(1), av.dim(2)});
  out.values().head(av.size()) = av.values();
  out.values().tail(bv.size()) = bv.values();
  const int a_id = a.id(), b_id = b.id();
  const Index na = av.size(), nb = bv.size();
  return tape.record(std::move(out), {a, b}, [=](Tape& t, int self) {
    const auto& g = t.grad(self).values();
    if (t.requires_grad(a_id)) t.grad_slot(a_id).values() += g.head(na);
    if (t.requires_grad(b_id)) t.grad_slot(b_id).values() += g.tail(nb);
  });
}

Var slice_channels(Var input, int begin, int count) {
  Tape& tape = common_tape({input});
  const Tensor& x = input.value();
  if (x.rank() != 3) throw Error("slice_channels: input must be [C,H,W]");
  if (begin < 0 || count < 1 || begin + count > x.dim(0)) {
    throw Error("slice_channels: channel range [" + std::to_string(begin) + "," +
                std::to_string(begin + count) + ") outside dim 0 of extent " + std::to_string(x.dim(0)));
  }
  const Index plane = static_cast<Index>(x.dim(1)) * x.dim(2);
  Tensor out({count, x.dim(1), x.dim(2)});
  out.values() = x.values().segment(begin * plane, count * plane);
  const int in_id = input.id();
  return tape.record(std::move(out), {input}, [=](Tape& t, int self) {
    t.grad_slot(in_id).values().segment(begin * plane, count * plane) += t.grad(self).values();
  });
}

Var sum(Var input) {
  Tape& tape = common_tape({input});
  const int in_id = input.id();
  return tape.record(Tensor({1}, {input.value().values().sum()}), {input}, [=](Tape& t, int self) {
    t.grad_slot(in_id).values().array() += t.grad(self)[0];
  });
}

Var element(Var input, Index flat_index) {
  Tape& tape = common_tape({input});
  if (flat_index < 0 || flat_index >= input.value().size()) {
    throw Error("element: index " + std::to_string(flat_index) + " outside tensor of size " +
                std::to_string(input.value().size()));
  }
  const int in_id = input.id();
  return tape.record(Tensor({1}, {input.value()[flat_index]}), {input}, [=](Tape& t, int self) {
    t.grad_slot(in_id)[flat_index] += t.grad(self)[0];
  });
}

Var scale(Var input, double factor) {
  Tape& tape = common_tape({input});
  Tensor out = input.value();
  out.values() *= factor;
  const int in_id = input.id();
  return tape.record(std::move(out), {input}, [=](Tape& t, int self) {
    t.grad_slot(in_id).values() += factor * t.grad(self).values();
  });
}

Var add(Var a, Var b) {
  Tape& tape = common_tape({a, b});
  if (a.shape() != b.shape()) {
    throw Error("add: shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
  Tensor out = a.value();
  out.values() += b.value().values();
  const int a_id = a.id(), b_id = b.id();
  return tape.record(std::move(out), {a, b}, [=](Tape& t, int self) {
    if (t.requires_grad(a_id)) t.grad_slot(a_id).values() += t.grad(self).values();
    if (t.requires_grad(b_id)) t.grad_slot(b_id).values() += t.grad(self).values();
  });
}

Var dot(Var input, const Tensor& weights) {
  Tape& tape = common_tape({input});
  if (weights.shape() != input.shape()) {
    throw Error("dot: weight shape " + to_string(weights.shape()) + " differs from input " +
                to_string(input.shape()));
  }
  const int in_id = input.id();
  const double value = input.value().values().dot(weights.values());
  return tape.record(Tensor({1}, {value}), {input}, [=](Tape& t, int self) {
    t.grad_slot(in_id).values() += t.grad(self)[0] * weights.values();
  });
}

}  // namespace myolo
