// Copyright 2026 The myolo Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails. Criteria 5-9 share one trained model.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <limits>
#include <optional>
#include <random>
#include <set>
#include <sstream>

#include "myolo/checkpoint.hpp"
#include "myolo/cli.hpp"
#include "myolo/postprocess.hpp"
#include "myolo/saliency.hpp"
#include "myolo/service.hpp"
#include "myolo/shapesdata.hpp"
#include "myolo/train.hpp"

namespace {

using namespace myolo;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* pattern, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, pattern, args...);
  return buf;
}

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// Shared fixture for the criteria that need a trained detector.
constexpr std::uint64_t kDataSeed = 2026;
constexpr int kTrainImages = 2000;
constexpr int kHeldOutImages = 200;
constexpr double kTrainBudgetSeconds = 30 * 60;

struct Trained {
  Checkpoint ckpt;
  std::optional<double> train_seconds;  // unset when loaded from disk
  std::vector<Sample> held_out;
};

struct Options {
  std::string load_checkpoint;
  std::string save_checkpoint;
  int epochs = 0;
  std::vector<int> only;
};

Options g_options;
std::optional<Trained> g_trained;

GeneratorOptions single_object() {
  GeneratorOptions o;
  o.min_objects = o.max_objects = 1;
  return o;
}

std::vector<std::array<double, 2>> extents_of(std::span<const Sample> samples) {
  std::vector<std::array<double, 2>> out;
  for (const Sample& s : samples) {
    for (const Annotation& a : s.annotations) out.push_back({a.box.w, a.box.h});
  }
  return out;
}

TrainConfig acceptance_train_config() {
  TrainConfig tc;
  if (g_options.epochs > 0) tc.epochs = g_options.epochs;
  return tc;
}

Trained& trained() {
  if (g_trained) return *g_trained;
  const ModelConfig config;
  Trained t;
  t.held_out = make_samples("heldout", kHeldOutImages, kDataSeed, config, single_object());
  if (!g_options.load_checkpoint.empty()) {
    t.ckpt = load_checkpoint(g_options.load_checkpoint, config);
  } else {
    const auto start = Clock::now();
    const std::vector<Sample> data = make_samples("train", kTrainImages, kDataSeed, config);
    const AnchorSet priors = kmeans_priors(extents_of(data), config.anchors_per_cell);
    const TrainConfig tc = acceptance_train_config();
    TrainResult result = train(build(config, 1), data, priors, tc, [&](const EpochLoss& e) {
      std::cerr << fmt("  epoch %2d  loss %.4f  (%.0f s)\n", e.epoch, e.loss.total, seconds_since(start));
    });
    t.train_seconds = seconds_since(start);
    if (result.diverged) throw Error("training diverged: " + result.message);
    t.ckpt = Checkpoint{std::move(result.state), priors, {tc.epochs, result.history}};
    if (!g_options.save_checkpoint.empty()) save_checkpoint(t.ckpt, g_options.save_checkpoint);
  }
  g_trained = std::move(t);
  return *g_trained;
}

std::vector<Detection> detect_all(const Checkpoint& ckpt, const Tensor& image) {
  return decode_all(infer(ckpt.state, image).outputs, ckpt.priors, ckpt.state.config.num_classes);
}

// ---------------------------------------------------------------- 1
Outcome proposal_count() {
  const auto start = Clock::now();
  std::ostringstream out, err;
  const char* argv[] = {"myolo", "count", "--grids", "13,26,52", "--anchors", "3"};
  const int rc = run_cli(6, argv, out, err);
  const bool cli_ok = rc == 0 && out.str() == "10647\n";
  const bool full_ok = count_proposals(ModelConfig::full_scale()) == 10647;

  std::mt19937_64 rng(11);
  int agree = 0;
  for (int n = 0; n < 50; ++n) {
    ModelConfig c;
    c.input_size = 32 * std::uniform_int_distribution<int>(1, 8)(rng);
    c.anchors_per_cell = std::uniform_int_distribution<int>(1, 4)(rng);
    c.num_classes = std::uniform_int_distribution<int>(1, 5)(rng);
    c.validate();
    long enumerated = 0;
    std::array<PathwayOutput, kPathways> zero;
    for (Pathway p : kAllPathways) {
      const int S = c.input_size / c.stride(p);
      for (int i = 0; i < S; ++i)
        for (int j = 0; j < S; ++j)
          for (int a = 0; a < c.anchors_per_cell; ++a) ++enumerated;
      zero[static_cast<std::size_t>(index_of(p))] = {p, Tensor::zeros({c.output_channels(), S, S}), c.stride(p)};
    }
    std::vector<std::array<double, 2>> extents;
    for (int k = 0; k < kPathways * c.anchors_per_cell; ++k) extents.push_back({8.0 + k, 8.0 + k});
    const auto decoded = decode_all(zero, AnchorSet(extents, c.anchors_per_cell), c.num_classes);
    if (enumerated == count_proposals(c) && static_cast<long>(decoded.size()) == enumerated) ++agree;
  }
  const double secs = seconds_since(start);
  return {cli_ok && full_ok && agree == 50 && secs < 1.0,
          fmt("cli=%s full-scale=%s oracle agreement %d/50, %.3f s (limit 1 s)", out.str() == "10647\n" ? "10647" : "WRONG",
              full_ok ? "10647" : "WRONG", agree, secs)};
}

// ---------------------------------------------------------------- 2
// Loss plus the sign pattern of every leaky-ReLU pre-activation, so finite
// differences that straddle a kink can be detected and retaken.
struct Probe {
  double loss = 0;
  std::vector<bool> signs;
};

Probe probe(const ModelState& s, const Tensor& image, const TargetTensor& targets, const LossWeights& w) {
  const Inference inf = infer(s, image);
  std::array<Tensor, kPathways> outs;
  for (std::size_t k = 0; k < kPathways; ++k) outs[k] = inf.outputs[k].grid;
  Probe p{yolo_loss_value(outs, targets, s.config, w).total, {}};
  for (const auto& [name, t] : inf.taps) {
    for (Index i = 0; i < t.size(); ++i) p.signs.push_back(t[i] > 0);
  }
  return p;
}

struct GradFixture {
  ModelState state;
  Tensor image;
  TargetTensor targets;
};

GradFixture random_fixture(std::mt19937_64& rng) {
  ModelConfig c;
  c.input_size = 32;
  for (int& w : c.backbone_widths) w = std::uniform_int_distribution<int>(2, 4)(rng);
  c.head_width = std::uniform_int_distribution<int>(2, 4)(rng);
  c.num_classes = std::uniform_int_distribution<int>(1, 3)(rng);
  c.anchors_per_cell = std::uniform_int_distribution<int>(1, 2)(rng);
  c.tap_layers.clear();
  for (const ConvSpec& spec : layer_plan(c)) {
    if (!spec.linear) c.tap_layers.push_back(spec.name);
  }
  GradFixture f{build(c, rng()), Tensor::uniform({3, 32, 32}, rng, 0.0, 1.0), {}};

  std::uniform_real_distribution<double> ext(4.0, 28.0);
  std::vector<std::array<double, 2>> extents;
  for (int k = 0; k < kPathways * c.anchors_per_cell; ++k) extents.push_back({ext(rng), ext(rng)});
  const AnchorSet priors(extents, c.anchors_per_cell);
  std::vector<Annotation> anns;
  const int n_obj = std::uniform_int_distribution<int>(1, 2)(rng);
  for (int k = 0; k < n_obj; ++k) {
    const double w = ext(rng), h = ext(rng);
    std::uniform_real_distribution<double> cx(w / 2, 32 - w / 2), cy(h / 2, 32 - h / 2);
    anns.push_back({{cx(rng), cy(rng), w, h}, std::uniform_int_distribution<int>(0, c.num_classes - 1)(rng)});
  }
  f.targets = build_targets(anns, c, priors);
  return f;
}

Outcome gradient_check() {
  const auto start = Clock::now();
  // Five-point central stencil. The step halves whenever any pre-activation
  // changes sign inside the stencil; a network where some parameter cannot
  // be probed kink-free down to kMinStep is redrawn.
  constexpr double kStep = 2e-3;
  constexpr double kMinStep = 1e-6;
  constexpr double kTol = 1e-4;
  constexpr double kFloor = 1e-6;
  const LossWeights weights;
  std::mt19937_64 rng(22);
  long checked = 0, failed = 0;
  int redrawn = 0;
  double worst = 0;
  for (int net = 0; net < 20;) {
    GradFixture f = random_fixture(rng);
    const Gradients g = compute_gradients(f.state, f.image, f.targets, weights);
    const std::vector<bool> base = probe(f.state, f.image, f.targets, weights).signs;
    long net_checked = 0, net_failed = 0;
    double net_worst = 0;
    bool smooth = true;
    for (auto& [name, param] : f.state.params) {
      const Tensor& analytic = g.params.at(name);
      for (Index k = 0; smooth && k < param.size(); ++k) {
        const double orig = param[k];
        std::optional<double> fd;
        for (double h = kStep; !fd && h >= kMinStep; h /= 2) {
          std::array<double, 4> l{};
          bool clean = true;
          for (int q = 0; q < 4; ++q) {
            param[k] = orig + std::array{h, -h, 2 * h, -2 * h}[static_cast<std::size_t>(q)];
            const Probe p = probe(f.state, f.image, f.targets, weights);
            l[static_cast<std::size_t>(q)] = p.loss;
            clean = clean && p.signs == base;
          }
          param[k] = orig;
          if (clean) fd = (8 * (l[0] - l[1]) - (l[2] - l[3])) / (12 * h);
        }
        if (!fd) {
          smooth = false;
          break;
        }
        const double rel = std::abs(*fd - analytic[k]) / std::max({std::abs(*fd), std::abs(analytic[k]), kFloor});
        net_worst = std::max(net_worst, rel);
        ++net_checked;
        if (rel >= kTol) ++net_failed;
      }
      if (!smooth) break;
    }
    if (!smooth) {
      ++redrawn;
      continue;
    }
    checked += net_checked;
    failed += net_failed;
    worst = std::max(worst, net_worst);
    ++net;
  }
  const double secs = seconds_since(start);
  return {failed == 0 && secs < 120.0,
          fmt("%ld parameters over 20 nets (%d redrawn at a kink), %ld at or above 1e-4, worst rel err %.2e, "
              "%.1f s (limit 120 s)",
              checked, redrawn, failed, worst, secs)};
}

// ---------------------------------------------------------------- 3
Outcome assignment_soundness() {
  const auto start = Clock::now();
  constexpr double kThr = 0.3;
  const ModelConfig c;
  std::mt19937_64 rng(33);
  std::uniform_real_distribution<double> ext(2.0, 90.0);
  int annotations = 0, without_positive = 0, unjustified = 0, oracle_disagree = 0;
  for (int round = 0; round < 100; ++round) {
    std::vector<std::array<double, 2>> extents;
    for (int k = 0; k < kPathways * c.anchors_per_cell; ++k) extents.push_back({ext(rng), ext(rng)});
    const AnchorSet priors(extents, c.anchors_per_cell);
    for (int n = 0; n < 20; ++n, ++annotations) {
      const double w = ext(rng), h = ext(rng);
      std::uniform_real_distribution<double> pos(0.0, 96.0);
      const Annotation ann{{pos(rng), pos(rng), w, h}, 0};
      const auto got = select_positive_anchors(ann, priors, c, kThr);

      // Oracle: co-centered overlap written out from scratch.
      auto overlap = [&](const AnchorPrior& p) {
        const double inter = std::min(w, p.pw) * std::min(h, p.ph);
        return inter / (w * h + p.pw * p.ph - inter);
      };
      std::set<CellAddress> expected;
      double best = -1;
      CellAddress best_addr;
      for (Pathway p : kAllPathways) {
        const int S = c.grid(p);
        const int s = c.stride(p);
        const int i = std::clamp(static_cast<int>(std::floor(ann.box.cy / s)), 0, S - 1);
        const int j = std::clamp(static_cast<int>(std::floor(ann.box.cx / s)), 0, S - 1);
        for (int a = 0; a < c.anchors_per_cell; ++a) {
          const double v = overlap(priors.at(p, a));
          if (v > kThr) expected.insert({p, i, j, a});
          if (v > best) {
            best = v;
            best_addr = {p, i, j, a};
          }
        }
      }
      if (expected.empty()) expected.insert(best_addr);

      if (got.empty()) ++without_positive;
      for (const CellAddress& a : got) {
        if (!(overlap(priors.at(a.pathway, a.anchor)) > kThr) && !(a == best_addr)) ++unjustified;
      }
      if (std::set<CellAddress>(got.begin(), got.end()) != expected || got.size() != expected.size()) {
        ++oracle_disagree;
      }
    }
  }
  const double secs = seconds_since(start);
  return {without_positive == 0 && unjustified == 0 && oracle_disagree == 0 && secs < 10.0,
          fmt("%d annotations: %d without positive, %d unjustified positives, %d oracle mismatches, %.2f s (limit 10 s)",
              annotations, without_positive, unjustified, oracle_disagree, secs)};
}

// ---------------------------------------------------------------- 4
double oracle_iou(const BBox& a, const BBox& b) {
  const double ix = std::max(0.0, std::min(a.cx + a.w / 2, b.cx + b.w / 2) - std::max(a.cx - a.w / 2, b.cx - b.w / 2));
  const double iy = std::max(0.0, std::min(a.cy + a.h / 2, b.cy + b.h / 2) - std::max(a.cy - a.h / 2, b.cy - b.h / 2));
  const double inter = ix * iy;
  const double uni = a.w * a.h + b.w * b.h - inter;
  return uni > 0 ? inter / uni : 0.0;
}

// Repeatedly take the most confident remaining candidate (earliest on ties)
// and discard every same-class candidate overlapping it.
std::vector<Detection> oracle_nms(const std::vector<Detection>& dets, double conf_thr, double iou_thr) {
  std::vector<bool> alive(dets.size());
  for (std::size_t k = 0; k < dets.size(); ++k) alive[k] = dets[k].confidence * dets[k].class_prob >= conf_thr;
  std::vector<Detection> kept;
  while (true) {
    std::optional<std::size_t> top;
    for (std::size_t k = 0; k < dets.size(); ++k) {
      if (alive[k] && (!top || dets[k].confidence > dets[*top].confidence)) top = k;
    }
    if (!top) break;
    kept.push_back(dets[*top]);
    alive[*top] = false;
    for (std::size_t k = 0; k < dets.size(); ++k) {
      if (alive[k] && dets[k].class_id == dets[*top].class_id && oracle_iou(dets[k].box, dets[*top].box) > iou_thr) {
        alive[k] = false;
      }
    }
  }
  return kept;
}

bool same(const std::vector<Detection>& a, const std::vector<Detection>& b) {
  return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin(), [](const Detection& x, const Detection& y) {
           return x.source == y.source && x.box == y.box && x.class_id == y.class_id &&
                  x.confidence == y.confidence && x.class_prob == y.class_prob;
         });
}

Outcome nms_equivalence() {
  const auto start = Clock::now();
  std::mt19937_64 rng(44);
  const NmsOptions opts;
  int mismatches = 0, not_idempotent = 0, not_antichain = 0, lost_top = 0;
  for (int set = 0; set < 200; ++set) {
    const int n = std::uniform_int_distribution<int>(0, 100)(rng);
    const bool coarse = set % 2 == 0;  // quantized confidences produce ties
    std::vector<Detection> dets(static_cast<std::size_t>(n));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int k = 0; k < n; ++k) {
      Detection& d = dets[static_cast<std::size_t>(k)];
      d.box = {u(rng) * 96, u(rng) * 96, 4 + u(rng) * 40, 4 + u(rng) * 40};
      d.class_id = std::uniform_int_distribution<int>(0, 2)(rng);
      d.confidence = coarse ? std::round(u(rng) * 10) / 10 : u(rng);
      d.class_prob = 0.5 + 0.5 * u(rng);
      d.source = {Pathway::small, k, 0, 0};
    }
    const auto got = nms(dets, opts);
    if (!same(got, oracle_nms(dets, opts.conf_threshold, opts.iou_threshold))) ++mismatches;
    if (!same(nms(got, opts), got)) ++not_idempotent;
    for (std::size_t a = 0; a < got.size(); ++a)
      for (std::size_t b = a + 1; b < got.size(); ++b)
        if (got[a].class_id == got[b].class_id && oracle_iou(got[a].box, got[b].box) > opts.iou_threshold)
          ++not_antichain;
    const Detection* top = nullptr;
    for (const Detection& d : dets) {
      if (d.confidence * d.class_prob >= opts.conf_threshold && (!top || d.confidence > top->confidence)) top = &d;
    }
    if (top && std::none_of(got.begin(), got.end(), [&](const Detection& d) { return d.source == top->source; })) {
      ++lost_top;
    }
  }
  const double secs = seconds_since(start);
  return {mismatches + not_idempotent + not_antichain + lost_top == 0 && secs < 10.0,
          fmt("200 sets: %d oracle mismatches, %d non-idempotent, %d antichain violations, %d lost top, %.2f s", mismatches,
              not_idempotent, not_antichain, lost_top, secs)};
}

// ---------------------------------------------------------------- 5
bool detected(const Checkpoint& ckpt, const Sample& s, const NmsOptions& opts) {
  const Annotation& gt = s.annotations.front();
  const auto kept = nms(detect_all(ckpt, s.image), opts);
  return std::any_of(kept.begin(), kept.end(),
                     [&](const Detection& d) { return d.class_id == gt.class_id && iou(d.box, gt.box) >= 0.5; });
}

Outcome desk_training() {
  // Determinism: two short runs from the same seeds must agree bit for bit.
  const ModelConfig config;
  const auto small = make_samples("train", 48, kDataSeed, config);
  const AnchorSet priors = kmeans_priors(extents_of(small), config.anchors_per_cell);
  TrainConfig short_tc;
  short_tc.epochs = 2;
  const TrainResult r1 = train(build(config, 7), small, priors, short_tc);
  const TrainResult r2 = train(build(config, 7), small, priors, short_tc);
  bool deterministic = r1.state.params == r2.state.params && r1.history.size() == r2.history.size();
  for (std::size_t k = 0; deterministic && k < r1.history.size(); ++k) {
    deterministic = r1.history[k].loss.total == r2.history[k].loss.total;
  }

  Trained& t = trained();
  const NmsOptions opts{0.25, 0.45};
  int hits = 0;
  for (const Sample& s : t.held_out) hits += detected(t.ckpt, s, opts) ? 1 : 0;
  const double rate = static_cast<double>(hits) / static_cast<double>(t.held_out.size());
  const bool in_budget = t.train_seconds && *t.train_seconds <= kTrainBudgetSeconds;
  const std::string timing =
      t.train_seconds ? fmt("trained %d epochs in %.0f s (limit 1800 s)", t.ckpt.meta.epochs, *t.train_seconds)
                      : std::string("checkpoint loaded from disk, training time not measured");
  return {rate >= 0.9 && in_budget && deterministic,
          fmt("detection rate %.3f (%d/%zu, need >= 0.9); %s; same-seed rerun %s", rate, hits, t.held_out.size(),
              timing.c_str(), deterministic ? "identical" : "DIFFERS")};
}

// ---------------------------------------------------------------- 6
// Argmax on the raw logit: the sigmoid ties confident cells at 1.0.
ConfidencePeak peak(const Checkpoint& ckpt, const Tensor& image) {
  return confidence_peak(infer(ckpt.state, image).outputs, ckpt.state.config.anchors_per_cell);
}

Outcome shift_behavior() {
  Trained& t = trained();
  const ModelConfig& config = t.ckpt.state.config;
  std::mt19937_64 rng(66);
  GeneratorOptions opts = single_object();
  opts.min_size = 12;
  opts.max_size = 24;
  int passed = 0, in_fill = 0;
  std::vector<double> conf_ratio;
  constexpr int kImages = 50;
  for (int n = 0; n < kImages; ++n) {
    const CellAddress cell{Pathway::medium, std::uniform_int_distribution<int>(2, 3)(rng),
                           std::uniform_int_distribution<int>(2, 3)(rng), 0};
    const Tensor image = render(scene_at_cell(derive_seed(kDataSeed, "shift", static_cast<std::uint64_t>(n)), config,
                                              cell, n % 3, 0.25, opts))
                             .image;
    const ConfidencePeak base = peak(t.ckpt, image);
    const int s = config.stride(base.cell.pathway);
    bool ok = true, fill_hit = false;
    double lo = base.confidence(), hi = lo;
    for (int k : {-2, -1, 1, 2}) {
      const int dx = k * s;
      const ConfidencePeak d = peak(t.ckpt, shift_image(image, dx, 0));
      const bool tracks = d.cell.pathway == base.cell.pathway && d.cell.j == base.cell.j + k;
      ok = ok && tracks;
      // Cell centre inside the zero-filled strip uncovered by the shift.
      const double center = (d.cell.j + 0.5) * config.stride(d.cell.pathway);
      const bool fill = dx > 0 ? center < dx : center >= config.input_size + dx;
      fill_hit = fill_hit || (!tracks && fill);
      lo = std::min(lo, d.confidence());
      hi = std::max(hi, d.confidence());
    }
    passed += ok ? 1 : 0;
    in_fill += fill_hit ? 1 : 0;
    conf_ratio.push_back(lo / hi);
  }
  std::sort(conf_ratio.begin(), conf_ratio.end());
  const double frac = static_cast<double>(passed) / kImages;
  return {frac >= 0.9, fmt("%d/%d images track the shift cell for cell (need >= 90%%); %d images lose the argmax to "
                           "a cell inside the zero-filled strip; median min/max confidence ratio over the sweep %.2f",
                           passed, kImages, in_fill, conf_ratio[conf_ratio.size() / 2])};
}

// ---------------------------------------------------------------- 7
Outcome census_statistics() {
  Trained& t = trained();
  auto census_at = [&](double thr) {
    std::vector<int> counts;
    for (const Sample& s : t.held_out) {
      counts.push_back(active_cell_census(detect_all(t.ckpt, s.image), s.annotations.front().box, thr));
    }
    std::sort(counts.begin(), counts.end());
    return counts;
  };
  auto summary = [](const std::vector<int>& c) {
    const double at_most_4 =
        static_cast<double>(std::count_if(c.begin(), c.end(), [](int v) { return v <= 4; })) / static_cast<double>(c.size());
    const std::size_t m = c.size() / 2;
    const double median = c.size() % 2 ? c[m] : 0.5 * (c[m - 1] + c[m]);
    return std::pair{at_most_4, median};
  };
  const auto [frac, median] = summary(census_at(0.5));
  const auto [frac_lo, median_lo] = summary(census_at(0.25));
  const auto [frac_hi, median_hi] = summary(census_at(0.75));
  return {frac >= 0.95 && median >= 1 && median <= 2,
          fmt("thr 0.5: census<=4 in %.3f (need >= 0.95), median %.1f (need 1..2); "
              "sensitivity thr 0.25: %.3f / median %.1f, thr 0.75: %.3f / median %.1f",
              frac, median, frac_lo, median_lo, frac_hi, median_hi)};
}

// ---------------------------------------------------------------- 8, 9
// The default 96 px canvas has a 3x3 large grid with a single interior cell.
// The network is fully convolutional, so the trained weights are evaluated on
// 160 px canvases (5x5 large grid, 9 interior cells).
constexpr int kSaliencyCanvas = 160;
const std::string kSaliencyTap = "large.fuse";

ModelState on_canvas(const ModelState& s, int size) {
  ModelState out = s;
  out.config.input_size = size;
  out.config.validate();
  return out;
}

int large_anchor_for(const AnchorSet& priors, double extent) {
  int best = 0;
  double best_iou = -1;
  for (int a = 0; a < priors.anchors_per_pathway(); ++a) {
    const double v = wh_iou(BBox{0, 0, extent, extent}, priors.at(Pathway::large, a));
    if (v > best_iou) {
      best_iou = v;
      best = a;
    }
  }
  return best;
}

std::vector<Sample> cell_samples(const ModelConfig& config, const CellAddress& cell, int class_id, int n) {
  GeneratorOptions opts = single_object();
  opts.min_size = 36;
  opts.max_size = 56;
  std::vector<Sample> out;
  for (int k = 0; k < n; ++k) {
    const auto seed = derive_seed(kDataSeed, "cell", static_cast<std::uint64_t>(cell.i * 100 + cell.j * 10) * 1000 + k);
    RenderedScene scene = render(scene_at_cell(seed, config, cell, class_id, 0.25, opts));
    out.push_back({fmt("cell_%d_%d_%02d", cell.i, cell.j, k), std::move(scene.image), std::move(scene.annotations)});
  }
  return out;
}

struct CellMaps {
  SaliencyMap c, w, h;
};

CellMaps maps_for(const ModelState& state, const AnchorSet& priors, int i, int j, const std::string& tap) {
  const CellAddress cell{Pathway::large, i, j, large_anchor_for(priors, 46.0)};
  const auto samples = cell_samples(state.config, cell, 0, 15);
  return {saliency_averaged(state, samples, 0, cell, NeuronKind::c, tap, 15),
          saliency_averaged(state, samples, 0, cell, NeuronKind::w, tap, 15),
          saliency_averaged(state, samples, 0, cell, NeuronKind::h, tap, 15)};
}

Outcome saliency_localization() {
  Trained& t = trained();
  const ModelState state = on_canvas(t.ckpt.state, kSaliencyCanvas);
  const int S = state.config.grid(Pathway::large);
  int tested = 0, within = 0;
  std::string distances;
  for (int i = 1; i + 1 < S; ++i) {
    for (int j = 1; j + 1 < S; ++j) {
      const CellAddress cell{Pathway::large, i, j, large_anchor_for(t.ckpt.priors, 46.0)};
      const auto samples = cell_samples(state.config, cell, 0, 15);
      const SaliencyMap m = saliency_averaged(state, samples, 0, cell, NeuronKind::c, kSaliencyTap, 15);
      const MapMoments mo = moments(m.values);
      const auto [pr, pc] = project_to_tap(cell, state.config, static_cast<int>(m.values.rows()),
                                           static_cast<int>(m.values.cols()));
      const double dist = std::hypot(mo.row - pr, mo.col - pc);
      ++tested;
      within += dist <= 1.5 ? 1 : 0;
      distances += fmt("%s%.2f", distances.empty() ? "" : " ", dist);
    }
  }
  return {within >= 5, fmt("%d/%d interior large cells within 1.5 tap cells (need >= 5) on %d px canvases; "
                           "distances [%s]",
                           within, tested, kSaliencyCanvas, distances.c_str())};
}

struct ConcentrationStats {
  double c = 0, w = 0, h = 0;  // center-cell concentrations
  int anisotropic = 0;         // of 5 cells
};

ConcentrationStats concentration_stats(const ModelState& state, const AnchorSet& priors, const std::string& tap) {
  const int mid = state.config.grid(Pathway::large) / 2;
  ConcentrationStats out;
  const std::array<std::array<int, 2>, 5> cells{{{mid, mid}, {mid - 1, mid}, {mid + 1, mid}, {mid, mid - 1}, {mid, mid + 1}}};
  for (const auto& [i, j] : cells) {
    const CellMaps m = maps_for(state, priors, i, j, tap);
    if (i == mid && j == mid) {
      out.c = concentration(m.c);
      out.w = concentration(m.w);
      out.h = concentration(m.h);
    }
    const MapMoments w = moments(m.w.values), h = moments(m.h.values);
    if (w.var_col >= w.var_row && h.var_row >= h.var_col) ++out.anisotropic;
  }
  return out;
}

// Decided on the pre-head fusion tap, as for localization. The first head
// convolution is reported alongside for reference only.
Outcome saliency_concentration() {
  Trained& t = trained();
  const ModelState state = on_canvas(t.ckpt.state, kSaliencyCanvas);
  const ConcentrationStats fuse = concentration_stats(state, t.ckpt.priors, kSaliencyTap);
  const ConcentrationStats conv1 = concentration_stats(state, t.ckpt.priors, "large.conv1");
  const bool ordered = fuse.c < fuse.w && fuse.c < fuse.h;
  return {ordered && fuse.anisotropic >= 4,
          fmt("%s: center cell concentration c %.3f, w %.3f, h %.3f (need c < w and c < h); "
              "w wider / h taller in %d of 5 cells (need >= 4) [reference, large.conv1: c %.3f, w %.3f, h %.3f; "
              "%d of 5]",
              kSaliencyTap.c_str(), fuse.c, fuse.w, fuse.h, fuse.anisotropic, conv1.c, conv1.w, conv1.h,
              conv1.anisotropic)};
}

// ---------------------------------------------------------------- 10
Outcome saliency_invariants() {
  const auto start = Clock::now();
  const ModelConfig config;
  const ModelState state = build(config, 101);
  std::mt19937_64 rng(1010);
  int linear_bad = 0, zero_bad = 0, mean_bad = 0, checks = 0;
  for (int n = 0; n < 4; ++n) {
    const Tensor image = Tensor::uniform({3, 96, 96}, rng, 0.0, 1.0);
    for (Pathway p : kAllPathways) {
      const CellAddress cell{p, 1, 1, n % config.anchors_per_cell};
      for (NeuronKind kind : {NeuronKind::x, NeuronKind::w, NeuronKind::c, NeuronKind::p}) {
        const NeuronSelector sel{cell, kind, kind == NeuronKind::p ? n % config.num_classes : -1};
        const std::string tap = std::string(pathway_name(p)) + ".fuse";
        const SaliencyMap base = saliency_single(state, image, sel, tap);
        for (double k : {2.0, 0.5, -4.0, 8.0}) {
          ++checks;
          const SaliencyMap scaled = saliency_single(state, image, sel, tap, k);
          if (!(scaled.values.array() == k * base.values.array()).all()) ++linear_bad;
        }
        // The small head projections feed nothing on the other pathways.
        if (p != Pathway::small) {
          for (const char* tap0 : {"small.conv2", "small.out"}) {
            ++checks;
            if (!saliency_single(state, image, sel, tap0).values.isZero(0.0)) ++zero_bad;
          }
        }
        // Mean of one image, and of two copies of it, is that image's map.
        Sample sample{"img", image, {}};
        const Sample* one[] = {&sample};
        const Sample* two[] = {&sample, &sample};
        ++checks;
        if (saliency_mean(state, one, sel, tap).values != base.values ||
            saliency_mean(state, two, sel, tap).values != base.values) {
          ++mean_bad;
        }
      }
    }
  }
  const double secs = seconds_since(start);
  return {linear_bad + zero_bad + mean_bad == 0 && secs < 60.0,
          fmt("%d checks: %d linearity, %d zero-gradient, %d averaging violations, %.1f s (limit 60 s)", checks,
              linear_bad, zero_bad, mean_bad, secs)};
}

// ---------------------------------------------------------------- 11
Outcome checkpoint_roundtrip() {
  const ModelConfig config;
  const ModelState state = g_trained ? g_trained->ckpt.state : build(config, 111);
  const AnchorSet priors = g_trained ? g_trained->ckpt.priors : default_priors(config);
  const Checkpoint ckpt{state, priors, {}};
  const auto path = std::filesystem::temp_directory_path() / "myolo_acceptance.ckpt";
  save_checkpoint(ckpt, path);
  const Checkpoint loaded = load_checkpoint(path, config);
  std::filesystem::remove(path);
  std::mt19937_64 rng(1111);
  int identical = 0;
  for (int n = 0; n < 10; ++n) {
    const Tensor image = Tensor::uniform({3, config.input_size, config.input_size}, rng, 0.0, 1.0);
    const Inference a = infer(state, image), b = infer(loaded.state, image);
    bool same_out = true;
    for (std::size_t k = 0; k < kPathways; ++k) same_out = same_out && a.outputs[k].grid == b.outputs[k].grid;
    identical += same_out ? 1 : 0;
  }
  const bool params_same = loaded.state.params == state.params && loaded.priors == priors;
  return {identical == 10 && params_same,
          fmt("%d/10 inputs bit-identical after save/load; parameters %s", identical, params_same ? "identical" : "DIFFER")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"myolo acceptance suite"};
  app.add_option("--checkpoint", g_options.load_checkpoint, "Reuse a trained checkpoint instead of training");
  app.add_option("--save-checkpoint", g_options.save_checkpoint, "Keep the trained checkpoint");
  app.add_option("--epochs", g_options.epochs, "Override the training epochs (diagnostics only)");
  app.add_option("--only", g_options.only, "Run only these criteria")->delimiter(',');
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"proposal-count identity", proposal_count},
      {"gradient correctness", gradient_check},
      {"assignment soundness", assignment_soundness},
      {"NMS oracle equivalence", nms_equivalence},
      {"desk-scale training", desk_training},
      {"shift behavior", shift_behavior},
      {"active-cell census", census_statistics},
      {"saliency localization", saliency_localization},
      {"saliency concentration ordering", saliency_concentration},
      {"saliency linearity and zero-gradient", saliency_invariants},
      {"checkpoint round-trip", checkpoint_roundtrip},
  };
  int failures = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const int id = static_cast<int>(k) + 1;
    if (!g_options.only.empty() && std::find(g_options.only.begin(), g_options.only.end(), id) == g_options.only.end()) {
      continue;
    }
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failures += o.pass ? 0 : 1;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << id << ". " << criteria[k].first << ": " << o.detail << std::endl;
  }
  std::cout << (failures == 0 ? std::string("all criteria passed")
                            : fmt("%d %s failed", failures, failures == 1 ? "criterion" : "criteria"))
            << std::endl;
  return failures == 0 ? 0 : 1;
}
