// Copyright 2026 The myolo Authors
// SPDX-License-Identifier: Apache-2.0

// Dense forward/backward kernels shared by the autodiff tape. Everything here is
// a free function templated on the scalar type; convolution lowers to a single
// Eigen GEMM over an im2col buffer.

#pragma once

#include <Eigen/Core>

#include "myolo/tensor.hpp"

namespace myolo::kernels {

struct ConvGeometry {
  int in_channels = 0;
  int in_h = 0;
  int in_w = 0;
  int out_channels = 0;
  int k = 1;
  int stride = 1;
  int pad = 0;
  int out_h = 0;
  int out_w = 0;

  Index patch() const { return static_cast<Index>(in_channels) * k * k; }
  Index positions() const { return static_cast<Index>(out_h) * out_w; }
  bool is_pointwise() const { return k == 1 && stride == 1 && pad == 0; }
};

/// Validates shapes and derives the output extents. Diagnostics name the
/// offending dimension.
template <typename Scalar>
ConvGeometry conv_geometry(const BasicTensor<Scalar>& input, const BasicTensor<Scalar>& kernels,
                           const BasicTensor<Scalar>& bias, int stride, int pad) {
  if (input.rank() != 3) throw Error("conv2d: input must be [C,H,W], got " + to_string(input.shape()));
  if (kernels.rank() != 4) {
    throw Error("conv2d: kernels must be [C_out,C_in,k,k], got " + to_string(kernels.shape()));
  }
  if (stride < 1) throw Error("conv2d: stride must be positive, got " + std::to_string(stride));
  if (pad < 0) throw Error("conv2d: pad must be non-negative, got " + std::to_string(pad));
  ConvGeometry g;
  g.in_channels = input.dim(0);
  g.in_h = input.dim(1);
  g.in_w = input.dim(2);
  g.out_channels = kernels.dim(0);
  g.k = kernels.dim(2);
  g.stride = stride;
  g.pad = pad;
  if (kernels.dim(1) != g.in_channels) {
    throw Error("conv2d: kernel in-channels (dim 1) is " + std::to_string(kernels.dim(1)) +
                " but input channels (dim 0) is " + std::to_string(g.in_channels));
  }
  if (kernels.dim(3) != g.k) {
    throw Error("conv2d: kernel width (dim 3) " + std::to_string(kernels.dim(3)) +
                " differs from kernel height (dim 2) " + std::to_string(g.k));
  }
  if (g.k % 2 == 0) throw Error("conv2d: kernel size (dim 2) must be odd, got " + std::to_string(g.k));
  if (bias.rank() != 1 || bias.dim(0) != g.out_channels) {
    throw Error("conv2d: bias must be [" + std::to_string(g.out_channels) + "] (C_out), got " +
                to_string(bias.shape()));
  }
  const int span_h = g.in_h + 2 * pad - g.k;
  const int span_w = g.in_w + 2 * pad - g.k;
  if (span_h < 0) throw Error("conv2d: kernel larger than padded input height (dim 1)");
  if (span_w < 0) throw Error("conv2d: kernel larger than padded input width (dim 2)");
  g.out_h = span_h / stride + 1;
  g.out_w = span_w / stride + 1;
  return g;
}

/// Gathers input patches into a (C_in*k*k) x (H'*W') row-major buffer.
template <typename Scalar>
void im2col(const ConvGeometry& g, const Scalar* input, RowMatrix<Scalar>& col) {
  col.resize(g.patch(), g.positions());
  for (int c = 0; c < g.in_channels; ++c) {
    const Scalar* plane = input + static_cast<Index>(c) * g.in_h * g.in_w;
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        Scalar* row = col.data() + ((static_cast<Index>(c) * g.k + ky) * g.k + kx) * g.positions();
        for (int oy = 0; oy < g.out_h; ++oy) {
          const int iy = oy * g.stride + ky - g.pad;
          Scalar* dst = row + static_cast<Index>(oy) * g.out_w;
          if (iy < 0 || iy >= g.in_h) {
            std::fill(dst, dst + g.out_w, Scalar(0));
            continue;
          }
          const Scalar* src = plane + static_cast<Index>(iy) * g.in_w;
          for (int ox = 0; ox < g.out_w; ++ox) {
            const int ix = ox * g.stride + kx - g.pad;
            dst[ox] = (ix >= 0 && ix < g.in_w) ? src[ix] : Scalar(0);
          }
        }
      }
    }
  }
}

/// Scatter-adds an im2col-shaped gradient back onto the input gradient.
template <typename Scalar>
void col2im_add(const ConvGeometry& g, const RowMatrix<Scalar>& col, Scalar* input_grad) {
  for (int c = 0; c < g.in_channels; ++c) {
    Scalar* plane = input_grad + static_cast<Index>(c) * g.in_h * g.in_w;
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        const Scalar* row =
            col.data() + ((static_cast<Index>(c) * g.k + ky) * g.k + kx) * g.positions();
        for (int oy = 0; oy < g.out_h; ++oy) {
          const int iy = oy * g.stride + ky - g.pad;
          if (iy < 0 || iy >= g.in_h) continue;
          const Scalar* src = row + static_cast<Index>(oy) * g.out_w;
          Scalar* dst = plane + static_cast<Index>(iy) * g.in_w;
          for (int ox = 0; ox < g.out_w; ++ox) {
            const int ix = ox * g.stride + kx - g.pad;
            if (ix >= 0 && ix < g.in_w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

/// Cross-correlation. `col` receives the im2col buffer for reuse in backward
/// (left empty for pointwise convolutions, where the input itself is the buffer).
template <typename Scalar>
BasicTensor<Scalar> conv2d_forward(const BasicTensor<Scalar>& input,
                                   const BasicTensor<Scalar>& kernels,
                                   const BasicTensor<Scalar>& bias, int stride, int pad,
                                   RowMatrix<Scalar>* col = nullptr) {
  const ConvGeometry g = conv_geometry(input, kernels, bias, stride, pad);
  BasicTensor<Scalar> out({g.out_channels, g.out_h, g.out_w});
  auto weights = Eigen::Map<const RowMatrix<Scalar>>(kernels.data(), g.out_channels, g.patch());
  auto result = out.channel_matrix();
  if (g.is_pointwise()) {
    result.noalias() = weights * input.channel_matrix();
  } else {
    RowMatrix<Scalar> local;
    RowMatrix<Scalar>& buffer = col ? *col : local;
    im2col(g, input.data(), buffer);
    result.noalias() = weights * buffer;
  }
  result.colwise() += bias.values();
  return out;
}

template <typename Scalar>
struct ConvGrads {
  BasicTensor<Scalar> input;
  BasicTensor<Scalar> kernels;
  BasicTensor<Scalar> bias;
};

/// Gradients of conv2d_forward given the upstream gradient. Pass `need_input`
/// false to skip the col2im scatter when the input is a constant.
template <typename Scalar>
ConvGrads<Scalar> conv2d_backward(const BasicTensor<Scalar>& input,
                                  const BasicTensor<Scalar>& kernels,
                                  const RowMatrix<Scalar>& col, const BasicTensor<Scalar>& out_grad,
                                  int stride, int pad, bool need_input = true) {
  BasicTensor<Scalar> bias_stub({kernels.dim(0)});
  const ConvGeometry g = conv_geometry(input, kernels, bias_stub, stride, pad);
  ConvGrads<Scalar> grads;
  auto upstream = out_grad.channel_matrix();
  grads.kernels = BasicTensor<Scalar>(kernels.shape());
  auto dw = Eigen::Map<RowMatrix<Scalar>>(grads.kernels.data(), g.out_channels, g.patch());
  if (g.is_pointwise()) {
    dw.noalias() = upstream * input.channel_matrix().transpose();
  } else {
    dw.noalias() = upstream * col.transpose();
  }
  grads.bias = BasicTensor<Scalar>({g.out_channels});
  grads.bias.values() = upstream.rowwise().sum();
  if (need_input) {
    auto weights = Eigen::Map<const RowMatrix<Scalar>>(kernels.data(), g.out_channels, g.patch());
    grads.input = BasicTensor<Scalar>(input.shape());
    if (g.is_pointwise()) {
      grads.input.channel_matrix().noalias() = weights.transpose() * upstream;
    } else {
      RowMatrix<Scalar> dcol = weights.transpose() * upstream;
      col2im_add(g, dcol, grads.input.data());
    }
  }
  return grads;
}

template <typename Scalar>
BasicTensor<Scalar> upsample2x_forward(const BasicTensor<Scalar>& input) {
  if (input.rank() != 3) throw Error("upsample2x: input must be [C,H,W], got " + to_string(input.shape()));
  const int C = input.dim(0), H = input.dim(1), W = input.dim(2);
  BasicTensor<Scalar> out({C, 2 * H, 2 * W});
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < 2 * H; ++y)
      for (int x = 0; x < 2 * W; ++x) out(c, y, x) = input(c, y / 2, x / 2);
  return out;
}

template <typename Scalar>
BasicTensor<Scalar> upsample2x_backward(const BasicTensor<Scalar>& out_grad) {
  const int C = out_grad.dim(0), H = out_grad.dim(1) / 2, W = out_grad.dim(2) / 2;
  BasicTensor<Scalar> grad({C, H, W});
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < 2 * H; ++y)
      for (int x = 0; x < 2 * W; ++x) grad(c, y / 2, x / 2) += out_grad(c, y, x);
  return grad;
}

}  // namespace myolo::kernels
