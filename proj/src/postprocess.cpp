// Copyright 2026 The myolo Authors
// SPDX-License-Identifier: Apache-2.0

#include "myolo/postprocess.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <tuple>

namespace myolo {

long count_proposals(std::span<const int> grids, int anchors_per_cell) {
  long total = 0;
  for (int s : grids) total += static_cast<long>(s) * s;
  return total * anchors_per_cell;
}

long count_proposals(const ModelConfig& config) {
  std::array<int, kPathways> grids{};
  for (Pathway p : kAllPathways) grids[static_cast<std::size_t>(index_of(p))] = config.grid(p);
  return count_proposals(grids, config.anchors_per_cell);
}

ConfidencePeak confidence_peak(const std::array<PathwayOutput, kPathways>& outputs, int anchors_per_cell) {
  ConfidencePeak best{{}, -std::numeric_limits<double>::infinity()};
  for (const PathwayOutput& out : outputs) {
    const Tensor& g = out.grid;
    const int per_anchor = g.dim(0) / anchors_per_cell;
    for (int i = 0; i < g.dim(1); ++i) {
      for (int j = 0; j < g.dim(2); ++j) {
        for (int a = 0; a < anchors_per_cell; ++a) {
          const double z = g(a * per_anchor + 4, i, j);
          if (z > best.logit) best = {{out.pathway, i, j, a}, z};
        }
      }
    }
  }
  if (!std::isfinite(best.logit)) throw Error("confidence_peak: no finite confidence logit");
  return best;
}

std::vector<Detection> decode_all(const std::array<PathwayOutput, kPathways>& outputs,
                                  const AnchorSet& priors, int num_classes) {
  const int A = priors.anchors_per_pathway();
  const int per_anchor = 5 + num_classes;
  std::vector<Detection> detections;
  for (const PathwayOutput& out : outputs) {
    const Tensor& g = out.grid;
    if (g.rank() != 3 || g.dim(0) != A * per_anchor || g.dim(1) != g.dim(2)) {
      throw Error("decode_all: " + std::string(pathway_name(out.pathway)) + " grid has shape " +
                  to_string(g.shape()) + ", expected [" + std::to_string(A * per_anchor) + ",S,S]");
    }
    const int S = g.dim(1);
    for (int i = 0; i < S; ++i) {
      for (int j = 0; j < S; ++j) {
        for (int a = 0; a < A; ++a) {
          const int base = a * per_anchor;
          Detection d;
          d.source = {out.pathway, i, j, a};
          d.box = decode(RawBox<double>{g(base, i, j), g(base + 1, i, j), g(base + 2, i, j), g(base + 3, i, j)},
                         d.source, priors.at(out.pathway, a), static_cast<double>(out.stride));
          d.confidence = sigmoid(g(base + 4, i, j));
          d.class_prob = -1.0;
          for (int k = 0; k < num_classes; ++k) {
            const double prob = sigmoid(g(base + 5 + k, i, j));
            if (prob > d.class_prob) {
              d.class_prob = prob;
              d.class_id = k;
            }
          }
          detections.push_back(d);
        }
      }
    }
  }
  return detections;
}

std::vector<Detection> nms(std::span<const Detection> detections, const NmsOptions& options) {
  std::vector<const Detection*> candidates;
  for (const Detection& d : detections) {
    const double score =
        options.score == ScoreMode::confidence_only ? d.confidence : d.confidence * d.class_prob;
    if (score >= options.conf_threshold) candidates.push_back(&d);
  }
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const Detection* a, const Detection* b) { return a->confidence > b->confidence; });
  std::vector<Detection> kept;
  for (const Detection* d : candidates) {
    const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](const Detection& k) {
      return k.class_id == d->class_id && iou(k.box, d->box) > options.iou_threshold;
    });
    if (!suppressed) kept.push_back(*d);
  }
  return kept;
}

int active_cell_census(std::span<const Detection> detections, const BBox& object, double conf_threshold,
                       double iou_threshold) {
  std::map<std::tuple<int, int, int>, const Detection*> best;
  for (const Detection& d : detections) {
    const auto key = std::make_tuple(index_of(d.source.pathway), d.source.i, d.source.j);
    auto [it, inserted] = best.emplace(key, &d);
    if (!inserted && d.confidence > it->second->confidence) it->second = &d;
  }
  int count = 0;
  for (const auto& [key, d] : best) {
    if (d->confidence > conf_threshold && iou(d->box, object) > iou_threshold) ++count;
  }
  return count;
}

Json to_json(const Detection& d) {
  return Json{{"cx", d.box.cx},
              {"cy", d.box.cy},
              {"w", d.box.w},
              {"h", d.box.h},
              {"class_id", d.class_id},
              {"class_prob", d.class_prob},
              {"confidence", d.confidence},
              {"pathway", pathway_name(d.source.pathway)},
              {"i", d.source.i},
              {"j", d.source.j},
              {"anchor", d.source.anchor}};
}

Json to_json(std::span<const Detection> detections) {
  Json arr = Json::array();
  for (const Detection& d : detections) arr.push_back(to_json(d));
  return arr;
}

}  // namespace myolo
