// Copyright 2026 The myolo Authors
// SPDX-License-Identifier: Apache-2.0

#include "myolo/cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <csignal>
#include <iostream>
#include <sstream>

#include "myolo/checkpoint.hpp"
#include "myolo/image_io.hpp"
#include "myolo/postprocess.hpp"
#include "myolo/saliency.hpp"
#include "myolo/service.hpp"
#include "myolo/shapesdata.hpp"
#include "myolo/train.hpp"

namespace myolo {

namespace {

struct Range {
  int from = 0;
  int to = 0;
};

Range parse_range(const std::string& text) {
  const auto dots = text.find("..");
  if (dots == std::string::npos) throw Error("range must look like A..B, got '" + text + "'");
  try {
    return {std::stoi(text.substr(0, dots)), std::stoi(text.substr(dots + 2))};
  } catch (const std::logic_error&) {
    throw Error("range must look like A..B, got '" + text + "'");
  }
}

std::vector<std::array<double, 2>> extents_of(std::span<const Sample> samples) {
  std::vector<std::array<double, 2>> extents;
  for (const Sample& s : samples) {
    for (const Annotation& a : s.annotations) extents.push_back({a.box.w, a.box.h});
  }
  return extents;
}

void write_or_print(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << text;
  } else {
    write_file(path, text);
  }
}

HttpService* g_running_service = nullptr;

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"myolo: mini single-stage detector with per-cell saliency inspection"};
  app.require_subcommand(1);

  // generate
  auto* generate = app.add_subcommand("generate", "Render a synthetic shapes dataset");
  std::string gen_out;
  int n_train = 2000, n_val = 200, input_size = 96;
  std::uint64_t gen_seed = 1;
  generate->add_option("--out", gen_out, "Output directory")->required();
  generate->add_option("--train", n_train, "Training images");
  generate->add_option("--val", n_val, "Validation images");
  generate->add_option("--seed", gen_seed, "Dataset seed");
  generate->add_option("--input-size", input_size, "Image side in pixels");

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a model on a generated dataset");
  std::string data_dir, ckpt_out, loss_csv;
  TrainConfig tc;
  std::uint64_t init_seed = 1;
  train_cmd->add_option("--data", data_dir, "Dataset directory")->required();
  train_cmd->add_option("--out", ckpt_out, "Checkpoint path")->required();
  train_cmd->add_option("--epochs", tc.epochs);
  train_cmd->add_option("--batch", tc.batch_size);
  train_cmd->add_option("--lr", tc.learning_rate);
  train_cmd->add_option("--seed", tc.seed, "Shuffle seed");
  train_cmd->add_option("--init-seed", init_seed, "Parameter initialization seed");
  train_cmd->add_option("--loss-csv", loss_csv, "Loss curve CSV (default <out>.loss.csv)");

  // detect
  auto* detect = app.add_subcommand("detect", "Run detection on one PNG");
  std::string ckpt_path, image_path, detect_out = "detections.json";
  NmsOptions nms_options;
  detect->add_option("--checkpoint", ckpt_path)->required();
  detect->add_option("--image", image_path)->required();
  detect->add_option("--conf", nms_options.conf_threshold);
  detect->add_option("--iou", nms_options.iou_threshold);
  detect->add_option("--out", detect_out, "Detections JSON ('-' for stdout)");

  // count
  auto* count = app.add_subcommand("count", "Number of (cell, anchor) proposals per image");
  std::vector<int> grids;
  int anchors = 3;
  std::string count_ckpt;
  count->add_option("--grids", grids, "Grid sizes, e.g. 13,26,52")->delimiter(',');
  count->add_option("--anchors", anchors);
  count->add_option("--checkpoint", count_ckpt, "Read grids and anchors from a checkpoint");

  // shift-sweep
  auto* sweep = app.add_subcommand("shift-sweep", "Shift an image and track the most confident cell");
  std::string axis = "x", range_text = "-16..16", sweep_out;
  int step = 2;
  sweep->add_option("--checkpoint", ckpt_path)->required();
  sweep->add_option("--image", image_path)->required();
  sweep->add_option("--axis", axis)->check(CLI::IsMember({"x", "y"}));
  sweep->add_option("--range", range_text, "Shift range A..B in pixels");
  sweep->add_option("--step", step);
  sweep->add_option("--out", sweep_out, "CSV path (stdout if omitted)");

  // saliency
  auto* sal = app.add_subcommand("saliency", "Averaged per-neuron saliency map");
  std::string pathway_text = "large", neuron_text = "c", tap, sal_out = ".";
  int class_id = 0, cell_i = 1, cell_j = 1, anchor = 0, n_images = 15;
  sal->add_option("--checkpoint", ckpt_path)->required();
  sal->add_option("--data", data_dir)->required();
  sal->add_option("--class", class_id);
  sal->add_option("--pathway", pathway_text);
  sal->add_option("--i", cell_i);
  sal->add_option("--j", cell_j);
  sal->add_option("--anchor", anchor);
  sal->add_option("--neuron", neuron_text);
  sal->add_option("--tap", tap, "Tap layer (default <pathway>.fuse)");
  sal->add_option("--n", n_images);
  sal->add_option("--out", sal_out, "Output directory for saliency.json / saliency.png");

  // serve
  auto* serve = app.add_subcommand("serve", "HTTP inspection service");
  std::string host = "127.0.0.1", ui_dir;
  int port = 8080;
  serve->add_option("--checkpoint", ckpt_path)->required();
  serve->add_option("--data", data_dir);
  serve->add_option("--host", host);
  serve->add_option("--port", port);
  serve->add_option("--ui", ui_dir, "Static UI bundle served at /");
  serve->add_option("--conf", nms_options.conf_threshold);
  serve->add_option("--iou", nms_options.iou_threshold);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (*generate) {
      ModelConfig config;
      config.input_size = input_size;
      config.validate();
      generate_dataset(n_train, n_val, gen_seed, config, gen_out);
      out << "wrote " << n_train << " train + " << n_val << " val images to " << gen_out << "\n";
    } else if (*train_cmd) {
      const Dataset data = load_dataset(data_dir, "train_");
      if (data.samples.empty()) throw Error("train: no train_* images in '" + data_dir + "'");
      ModelConfig config;
      config.input_size = data.samples.front().image.dim(1);
      const AnchorSet priors = kmeans_priors(extents_of(data.samples), config.anchors_per_cell);
      const auto start = std::chrono::steady_clock::now();
      TrainResult result = train(build(config, init_seed), data.samples, priors, tc, [&](const EpochLoss& e) {
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        out << "epoch " << e.epoch << " loss " << e.loss.total << " (" << secs << " s)\n" << std::flush;
      });
      Checkpoint ckpt{std::move(result.state), priors, {static_cast<int>(result.history.size()), result.history}};
      save_checkpoint(ckpt, ckpt_out);
      write_file(loss_csv.empty() ? ckpt_out + ".loss.csv" : loss_csv, loss_curve_csv(result.history));
      if (result.diverged) {
        err << "train: " << result.message << "\n";
        return 1;
      }
    } else if (*detect) {
      const Checkpoint ckpt = load_checkpoint(ckpt_path);
      const Tensor image = decode_png(read_file(image_path));
      const Inference result = infer(ckpt.state, image);
      const auto kept = nms(decode_all(result.outputs, ckpt.priors, ckpt.state.config.num_classes), nms_options);
      write_or_print(detect_out, to_json(kept).dump(1) + "\n", out);
    } else if (*count) {
      if (!count_ckpt.empty()) {
        out << count_proposals(load_checkpoint(count_ckpt).state.config) << "\n";
      } else {
        if (grids.empty()) throw Error("count: pass --grids or --checkpoint");
        for (int g : grids) {
          if (g < 1) throw Error("count: grid sizes must be positive");
        }
        if (anchors < 1) throw Error("count: --anchors must be positive");
        out << count_proposals(grids, anchors) << "\n";
      }
    } else if (*sweep) {
      if (step < 1) throw Error("shift-sweep: --step must be positive");
      const Range range = parse_range(range_text);
      const Checkpoint ckpt = load_checkpoint(ckpt_path);
      const Tensor image = decode_png(read_file(image_path));
      std::ostringstream csv;
      csv.precision(17);
      csv << "shift,pathway,i,j,anchor,confidence\n";
      for (int shift = range.from; shift <= range.to; shift += step) {
        const Tensor moved = axis == "x" ? shift_image(image, shift, 0) : shift_image(image, 0, shift);
        const ConfidencePeak best = confidence_peak(infer(ckpt.state, moved).outputs, ckpt.state.config.anchors_per_cell);
        csv << shift << ',' << pathway_name(best.cell.pathway) << ',' << best.cell.i << ',' << best.cell.j << ','
            << best.cell.anchor << ',' << best.confidence() << '\n';
      }
      write_or_print(sweep_out, csv.str(), out);
    } else if (*sal) {
      const Checkpoint ckpt = load_checkpoint(ckpt_path);
      const Dataset data = load_dataset(data_dir);
      const CellAddress cell{parse_pathway(pathway_text), cell_i, cell_j, anchor};
      const std::string layer = tap.empty() ? pathway_text + ".fuse" : tap;
      const SaliencyMap map =
          saliency_averaged(ckpt.state, data.samples, class_id, cell, parse_neuron(neuron_text), layer, n_images);
      std::filesystem::create_directories(sal_out);
      write_file(std::filesystem::path(sal_out) / "saliency.json", saliency_payload(map).dump() + "\n");
      write_file(std::filesystem::path(sal_out) / "saliency.png", heatmap_png(map));
      if (map.shortfall > 0) {
        err << "saliency: only " << map.n_images << " of " << n_images << " requested images qualify\n";
      }
      out << "averaged " << map.n_images << " images; concentration " << concentration(map) << "\n";
    } else if (*serve) {
      std::optional<Dataset> data;
      if (!data_dir.empty()) data = load_dataset(data_dir);
      InspectionSession session(load_checkpoint(ckpt_path), std::move(data), nms_options);
      std::optional<std::filesystem::path> ui;
      if (!ui_dir.empty()) ui = ui_dir;
      HttpService service(session, ui);
      const int bound = service.bind(host, port);
      out << "serving on http://" << host << ":" << bound << "\n" << std::flush;
      g_running_service = &service;
      std::signal(SIGINT, [](int) {
        if (g_running_service) g_running_service->stop();
      });
      service.serve();
      g_running_service = nullptr;
    }
  } catch (const std::exception& e) {
    err << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace myolo
