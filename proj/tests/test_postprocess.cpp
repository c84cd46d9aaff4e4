// Copyright 2026 The myolo Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <random>

#include "myolo/postprocess.hpp"
#include "myolo/shapesdata.hpp"

namespace myolo {
namespace {

std::array<PathwayOutput, kPathways> zero_outputs(const ModelConfig& c) {
  std::array<PathwayOutput, kPathways> out;
  for (Pathway p : kAllPathways) {
    out[static_cast<std::size_t>(index_of(p))] = {p, Tensor::zeros({c.output_channels(), c.grid(p), c.grid(p)}),
                                                  c.stride(p)};
  }
  return out;
}

TEST(CountProposals, Examples) {
  const std::vector<int> full{13, 26, 52};
  EXPECT_EQ(count_proposals(full, 3), 10647);
  EXPECT_EQ(count_proposals(ModelConfig::full_scale()), 10647);
  EXPECT_EQ(count_proposals(ModelConfig{}), 567);
  const std::vector<int> one{1};
  EXPECT_EQ(count_proposals(one, 1), 1);
}

TEST(CountProposals, MatchesDecodeAllLength) {
  std::mt19937_64 rng(1);
  for (int n = 0; n < 30; ++n) {
    ModelConfig c;
    c.input_size = 32 * static_cast<int>(1 + rng() % 6);
    c.anchors_per_cell = static_cast<int>(1 + rng() % 4);
    c.num_classes = static_cast<int>(1 + rng() % 4);
    std::vector<std::array<double, 2>> e;
    for (int k = 0; k < 3 * c.anchors_per_cell; ++k) e.push_back({4.0 + k, 6.0 + k});
    const auto all = decode_all(zero_outputs(c), AnchorSet(e, c.anchors_per_cell), c.num_classes);
    EXPECT_EQ(static_cast<long>(all.size()), count_proposals(c));
  }
}

TEST(DecodeAll, ZeroOutputs) {
  const ModelConfig c;
  const AnchorSet priors = default_priors(c);
  const auto all = decode_all(zero_outputs(c), priors, c.num_classes);
  ASSERT_EQ(all.size(), 567u);
  // Order: pathway, row-major cell, anchor.
  EXPECT_EQ(all[0].source, (CellAddress{Pathway::small, 0, 0, 0}));
  EXPECT_EQ(all[1].source, (CellAddress{Pathway::small, 0, 0, 1}));
  EXPECT_EQ(all[3].source, (CellAddress{Pathway::small, 0, 1, 0}));
  EXPECT_EQ(all[432].source, (CellAddress{Pathway::medium, 0, 0, 0}));
  for (const Detection& d : all) {
    const double s = c.stride(d.source.pathway);
    EXPECT_EQ(d.confidence, 0.5);
    EXPECT_EQ(d.class_prob, 0.5);
    EXPECT_EQ(d.class_id, 0);
    EXPECT_EQ(d.box.cx, (d.source.j + 0.5) * s);
    EXPECT_EQ(d.box.cy, (d.source.i + 0.5) * s);
    EXPECT_EQ(d.box.w, priors.at(d.source.pathway, d.source.anchor).pw);
    EXPECT_EQ(d.box.h, priors.at(d.source.pathway, d.source.anchor).ph);
  }
}

TEST(DecodeAll, ConfidenceIsSigmoidOfRawAndClassIsArgmax) {
  const ModelConfig c;
  auto out = zero_outputs(c);
  out[1].grid(channel_of(c, 2, 4), 3, 4) = 2.0;
  out[1].grid(channel_of(c, 2, 5 + 2), 3, 4) = 1.0;
  const auto all = decode_all(out, default_priors(c), c.num_classes);
  const auto it = std::find_if(all.begin(), all.end(), [](const Detection& d) {
    return d.source == CellAddress{Pathway::medium, 3, 4, 2};
  });
  ASSERT_NE(it, all.end());
  EXPECT_DOUBLE_EQ(it->confidence, 1 / (1 + std::exp(-2.0)));
  EXPECT_EQ(it->class_id, 2);
  EXPECT_THROW(decode_all(out, AnchorSet({{1, 1}, {2, 2}, {3, 3}}, 1), c.num_classes), Error);
}

TEST(ConfidencePeak, RanksSaturatedLogits) {
  const ModelConfig c;
  auto out = zero_outputs(c);
  out[0].grid(channel_of(c, 1, 4), 2, 3) = 40.0;
  out[2].grid(channel_of(c, 2, 4), 1, 1) = 45.0;
  const ConfidencePeak p = confidence_peak(out, c.anchors_per_cell);
  EXPECT_EQ(p.cell, (CellAddress{Pathway::large, 1, 1, 2}));
  EXPECT_EQ(p.logit, 45.0);
  // Both saturate, so the decoded confidences cannot separate them.
  EXPECT_EQ(sigmoid(40.0), sigmoid(45.0));
  // Ties keep the first in decode order.
  EXPECT_EQ(confidence_peak(zero_outputs(c), c.anchors_per_cell).cell, (CellAddress{Pathway::small, 0, 0, 0}));
}

Detection det(BBox box, double conf, int cls = 0, int id = 0, double prob = 1.0) {
  Detection d;
  d.box = box;
  d.confidence = conf;
  d.class_prob = prob;
  d.class_id = cls;
  d.source = {Pathway::small, id, 0, 0};
  return d;
}

TEST(Nms, Examples) {
  EXPECT_TRUE(nms(std::vector<Detection>{}).empty());
  const std::vector<Detection> two{det({10, 10, 8, 8}, 0.8, 0, 0), det({10, 10, 8, 8}, 0.9, 0, 1)};
  const auto kept = nms(two);
  ASSERT_EQ(kept.size(), 1u);
  EXPECT_EQ(kept[0].confidence, 0.9);
}

TEST(Nms, PerClassAndScoreFilter) {
  const std::vector<Detection> d{det({10, 10, 8, 8}, 0.9, 0, 0), det({10, 10, 8, 8}, 0.8, 1, 1),
                                 det({40, 40, 8, 8}, 0.9, 0, 2, 0.2)};
  EXPECT_EQ(nms(d).size(), 2u);  // 0.9 * 0.2 < 0.25
  NmsOptions conf_only;
  conf_only.score = ScoreMode::confidence_only;
  EXPECT_EQ(nms(d, conf_only).size(), 3u);
}

// Survivors are exactly the detections not overlapping any more confident
// survivor; checked by recomputing that fixed point from scratch.
TEST(Nms, FixedPointOracle) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int set = 0; set < 50; ++set) {
    std::vector<Detection> d;
    for (int k = 0; k < 50; ++k) {
      d.push_back(det({u(rng) * 60, u(rng) * 60, 5 + u(rng) * 30, 5 + u(rng) * 30}, u(rng),
                      static_cast<int>(rng() % 2), k, 0.5 + 0.5 * u(rng)));
    }
    const auto kept = nms(d);
    std::vector<bool> survives(d.size(), false);
    std::vector<std::size_t> order(d.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return d[a].confidence > d[b].confidence; });
    for (std::size_t r = 0; r < order.size(); ++r) {
      const Detection& x = d[order[r]];
      if (x.confidence * x.class_prob < 0.25) continue;
      bool ok = true;
      for (std::size_t q = 0; q < r; ++q) {
        const Detection& y = d[order[q]];
        if (survives[order[q]] && y.class_id == x.class_id && iou(x.box, y.box) > 0.45) ok = false;
      }
      survives[order[r]] = ok;
    }
    std::set<int> want, got;
    for (std::size_t k = 0; k < d.size(); ++k)
      if (survives[k]) want.insert(static_cast<int>(k));
    for (const Detection& k : kept) got.insert(k.source.i);
    EXPECT_EQ(got, want);
    for (std::size_t a = 0; a < kept.size(); ++a) {
      for (std::size_t b = a + 1; b < kept.size(); ++b) {
        if (kept[a].class_id == kept[b].class_id) EXPECT_LE(iou(kept[a].box, kept[b].box), 0.45);
      }
    }
    EXPECT_EQ(nms(kept).size(), kept.size());
  }
}

TEST(Census, CountsDistinctConfidentOverlappingCells) {
  const BBox gt{20, 20, 16, 16};
  std::vector<Detection> d{det(gt, 0.9, 0, 0), det(gt, 0.95, 0, 0), det({21, 20, 16, 16}, 0.7, 0, 1),
                           det({60, 60, 16, 16}, 0.9, 0, 2), det(gt, 0.3, 0, 3)};
  d[1].source.anchor = 1;
  EXPECT_EQ(active_cell_census(d, gt, 0.5), 2);
  EXPECT_EQ(active_cell_census(d, gt, 0.25), 3);
  EXPECT_EQ(active_cell_census(d, BBox{200, 200, 4, 4}, 0.25), 0);
  // A cell counts through its best anchor only.
  d[1].box = {90, 90, 4, 4};
  EXPECT_EQ(active_cell_census(d, gt, 0.5), 1);
}

TEST(Census, UntrainedModelIsQuiet) {
  const ModelConfig c;
  const auto s = make_samples("census", 3, 1, c);
  const ModelState m = build(c, 1);
  for (const Sample& x : s) {
    const auto all = decode_all(infer(m, x.image).outputs, default_priors(c), c.num_classes);
    EXPECT_EQ(active_cell_census(all, x.annotations.front().box, 0.9), 0);
  }
}

TEST(DetectionJson, Schema) {
  const Json j = to_json(det({1, 2, 3, 4}, 0.5, 2, 7, 0.25));
  for (const char* key : {"cx", "cy", "w", "h", "class_id", "class_prob", "confidence", "pathway", "i", "j", "anchor"}) {
    EXPECT_TRUE(j.contains(key)) << key;
  }
  EXPECT_EQ(j["pathway"], "small");
  EXPECT_EQ(j["i"], 7);
}

}  // namespace
}  // namespace myolo
