// Copyright 2026 The myolo Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <concepts>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "myolo/error.hpp"

namespace myolo {

/// Head output branch; index order is small (finest grid) to large (coarsest).
enum class Pathway : int { small = 0, medium = 1, large = 2 };
inline constexpr int kPathways = 3;

inline constexpr std::array<Pathway, kPathways> kAllPathways{Pathway::small, Pathway::medium,
                                                            Pathway::large};

inline int index_of(Pathway p) { return static_cast<int>(p); }

inline std::string_view pathway_name(Pathway p) {
  switch (p) {
    case Pathway::small: return "small";
    case Pathway::medium: return "medium";
    case Pathway::large: return "large";
  }
  return "?";
}

inline Pathway parse_pathway(std::string_view name) {
  for (Pathway p : kAllPathways) {
    if (pathway_name(p) == name) return p;
  }
  throw Error("unknown pathway '" + std::string(name) + "' (expected small|medium|large)");
}

/// Axis-aligned box in image pixels, center + extents.
template <std::floating_point T>
struct Box {
  T cx{};
  T cy{};
  T w{};
  T h{};

  T left() const { return cx - w / 2; }
  T right() const { return cx + w / 2; }
  T top() const { return cy - h / 2; }
  T bottom() const { return cy + h / 2; }
  T area() const { return w * h; }
  bool valid() const { return w > 0 && h > 0; }
  bool operator==(const Box&) const = default;
};

using BBox = Box<double>;

template <std::floating_point T>
T intersection_area(const Box<T>& a, const Box<T>& b) {
  const T iw = std::min(a.right(), b.right()) - std::max(a.left(), b.left());
  const T ih = std::min(a.bottom(), b.bottom()) - std::max(a.top(), b.top());
  return (iw > 0 && ih > 0) ? iw * ih : T(0);
}

template <std::floating_point T>
T iou(const Box<T>& a, const Box<T>& b) {
  const T inter = intersection_area(a, b);
  const T uni = a.area() + b.area() - inter;
  return uni > 0 ? std::clamp(inter / uni, T(0), T(1)) : T(0);
}

/// IOU of two boxes co-centered at the origin (shape-only comparison).
template <std::floating_point T>
T wh_iou(T w1, T h1, T w2, T h2) {
  const T inter = std::min(w1, w2) * std::min(h1, h2);
  return inter / (w1 * h1 + w2 * h2 - inter);
}

struct AnchorPrior {
  Pathway pathway = Pathway::small;
  int anchor_index = 0;
  double pw = 0;
  double ph = 0;

  double area() const { return pw * ph; }
  bool operator==(const AnchorPrior&) const = default;
};

inline double wh_iou(const BBox& gt, const AnchorPrior& prior) {
  return wh_iou(gt.w, gt.h, prior.pw, prior.ph);
}

/// One (pathway, row, column, anchor) output location; the "output pixel"
/// plus the anchor slot within it.
struct CellAddress {
  Pathway pathway = Pathway::small;
  int i = 0;
  int j = 0;
  int anchor = 0;

  bool operator==(const CellAddress&) const = default;
  auto operator<=>(const CellAddress&) const = default;
};

/// The full prior set: kPathways x anchors_per_pathway priors, ascending by
/// area, the smallest group serving the small pathway.
class AnchorSet {
 public:
  AnchorSet() = default;
  /// `extents` are (w, h) pairs; they are sorted by area and split evenly.
  AnchorSet(std::vector<std::array<double, 2>> extents, int anchors_per_pathway);

  int anchors_per_pathway() const { return per_pathway_; }
  const std::vector<AnchorPrior>& all() const { return priors_; }
  const AnchorPrior& at(Pathway p, int anchor) const;
  bool operator==(const AnchorSet&) const = default;

 private:
  std::vector<AnchorPrior> priors_;
  int per_pathway_ = 0;
};

/// k-means over box extents with 1 - wh_iou as distance; k = 3 * anchors.
/// Initialization takes area quantiles, so the result is deterministic.
AnchorSet kmeans_priors(std::span<const std::array<double, 2>> extents, int anchors_per_pathway,
                        int max_iterations = 100);

inline constexpr double kRawClamp = 10.0;
inline constexpr double kOffsetEps = 1e-4;

template <std::floating_point T>
T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

template <std::floating_point T>
struct RawBox {
  T tx{}, ty{}, tw{}, th{};
};

/// cx = (sigmoid(tx) + j) * stride, w = pw * exp(tw); raw values are clamped to
/// +-kRawClamp so the center never leaves its cell and exp cannot overflow.
template <std::floating_point T>
Box<T> decode(const RawBox<T>& raw, const CellAddress& cell, const AnchorPrior& prior, T stride) {
  auto clamp = [](T v) { return std::clamp(v, T(-kRawClamp), T(kRawClamp)); };
  Box<T> box;
  box.cx = (sigmoid(clamp(raw.tx)) + T(cell.j)) * stride;
  box.cy = (sigmoid(clamp(raw.ty)) + T(cell.i)) * stride;
  box.w = T(prior.pw) * std::exp(clamp(raw.tw));
  box.h = T(prior.ph) * std::exp(clamp(raw.th));
  return box;
}

/// Inverse of decode. The in-cell fractional offsets are clamped to
/// [kOffsetEps, 1 - kOffsetEps] before the logit.
template <std::floating_point T>
RawBox<T> encode(const Box<T>& box, const CellAddress& cell, const AnchorPrior& prior, T stride) {
  const T fx = box.cx / stride - T(cell.j);
  const T fy = box.cy / stride - T(cell.i);
  if (!(fx >= 0 && fx < 1 && fy >= 0 && fy < 1)) {
    throw Error("encode: box center (" + std::to_string(box.cx) + "," + std::to_string(box.cy) +
                ") lies outside cell (i=" + std::to_string(cell.i) + ",j=" + std::to_string(cell.j) +
                ") at stride " + std::to_string(stride));
  }
  if (!box.valid()) throw Error("encode: box extents must be positive");
  auto logit = [](T f) {
    f = std::clamp(f, T(kOffsetEps), T(1 - kOffsetEps));
    return std::log(f / (T(1) - f));
  };
  return {logit(fx), logit(fy), std::log(box.w / T(prior.pw)), std::log(box.h / T(prior.ph))};
}

}  // namespace myolo
