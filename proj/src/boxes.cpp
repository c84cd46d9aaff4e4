// Copyright 2026 The myolo Authors
// SPDX-License-Identifier: Apache-2.0

#include "myolo/boxes.hpp"

#include <limits>

namespace myolo {

AnchorSet::AnchorSet(std::vector<std::array<double, 2>> extents, int anchors_per_pathway)
    : per_pathway_(anchors_per_pathway) {
  if (anchors_per_pathway < 1) throw Error("anchor set: anchors per pathway must be positive");
  if (extents.size() != static_cast<std::size_t>(kPathways * anchors_per_pathway)) {
    throw Error("anchor set: expected " + std::to_string(kPathways * anchors_per_pathway) +
                " priors, got " + std::to_string(extents.size()));
  }
  for (const auto& e : extents) {
    if (!(e[0] > 0 && e[1] > 0)) throw Error("anchor set: prior extents must be positive");
  }
  std::stable_sort(extents.begin(), extents.end(),
                   [](const auto& a, const auto& b) { return a[0] * a[1] < b[0] * b[1]; });
  for (std::size_t n = 0; n < extents.size(); ++n) {
    const int p = static_cast<int>(n) / anchors_per_pathway;
    priors_.push_back({static_cast<Pathway>(p), static_cast<int>(n) % anchors_per_pathway,
                       extents[n][0], extents[n][1]});
  }
}

const AnchorPrior& AnchorSet::at(Pathway p, int anchor) const {
  if (anchor < 0 || anchor >= per_pathway_) {
    throw Error("anchor set: anchor index " + std::to_string(anchor) + " out of range");
  }
  return priors_.at(static_cast<std::size_t>(index_of(p) * per_pathway_ + anchor));
}

AnchorSet kmeans_priors(std::span<const std::array<double, 2>> extents, int anchors_per_pathway,
                        int max_iterations) {
  const std::size_t k = static_cast<std::size_t>(kPathways * anchors_per_pathway);
  if (extents.size() < k) {
    throw Error("kmeans_priors: need at least " + std::to_string(k) + " boxes, got " +
                std::to_string(extents.size()));
  }
  std::vector<std::array<double, 2>> sorted(extents.begin(), extents.end());
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const auto& a, const auto& b) { return a[0] * a[1] < b[0] * b[1]; });
  std::vector<std::array<double, 2>> centers(k);
  for (std::size_t c = 0; c < k; ++c) centers[c] = sorted[(2 * c + 1) * sorted.size() / (2 * k)];

  std::vector<std::size_t> owner(sorted.size(), 0);
  for (int iter = 0; iter < max_iterations; ++iter) {
    bool changed = false;
    for (std::size_t n = 0; n < sorted.size(); ++n) {
      double best = std::numeric_limits<double>::infinity();
      std::size_t arg = 0;
      for (std::size_t c = 0; c < k; ++c) {
        const double d = 1.0 - wh_iou(sorted[n][0], sorted[n][1], centers[c][0], centers[c][1]);
        if (d < best) {
          best = d;
          arg = c;
        }
      }
      if (iter == 0 || owner[n] != arg) changed = true;
      owner[n] = arg;
    }
    if (!changed) break;
    std::vector<std::array<double, 2>> sums(k, {0.0, 0.0});
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t n = 0; n < sorted.size(); ++n) {
      sums[owner[n]][0] += sorted[n][0];
      sums[owner[n]][1] += sorted[n][1];
      ++counts[owner[n]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        centers[c] = {sums[c][0] / static_cast<double>(counts[c]),
                      sums[c][1] / static_cast<double>(counts[c])};
      }
    }
  }
  return AnchorSet(std::move(centers), anchors_per_pathway);
}

}  // namespace myolo
