// Copyright 2026 The myolo Authors
// SPDX-License-Identifier: Apache-2.0

#include "myolo/service.hpp"

#include <httplib.h>

#include "myolo/image_io.hpp"

namespace myolo {

Tensor shift_image(const Tensor& image, int dx, int dy) {
  if (image.rank() != 3) throw Error("shift: image must be [C,H,W]");
  const int C = image.dim(0), H = image.dim(1), W = image.dim(2);
  Tensor out = Tensor::zeros(image.shape());
  for (int c = 0; c < C; ++c) {
    for (int y = 0; y < H; ++y) {
      const int sy = y - dy;
      if (sy < 0 || sy >= H) continue;
      for (int x = 0; x < W; ++x) {
        const int sx = x - dx;
        if (sx >= 0 && sx < W) out(c, y, x) = image(c, sy, sx);
      }
    }
  }
  return out;
}

Json inference_payload(const Checkpoint& ckpt, const Tensor& image, const NmsOptions& nms_options) {
  const ModelConfig& config = ckpt.state.config;
  const Inference result = infer(ckpt.state, image);
  const std::vector<Detection> all = decode_all(result.outputs, ckpt.priors, config.num_classes);
  const int A = config.anchors_per_cell;
  const int K = config.channels_per_anchor();

  Json pathways = Json::array();
  std::size_t next = 0;
  for (const PathwayOutput& out : result.outputs) {
    const int S = out.grid.dim(1);
    Json cells = Json::array();
    for (int i = 0; i < S; ++i) {
      for (int j = 0; j < S; ++j) {
        Json anchors = Json::array();
        for (int a = 0; a < A; ++a) {
          const Detection& d = all[next++];
          std::vector<double> raw(static_cast<std::size_t>(K));
          std::vector<double> probs(static_cast<std::size_t>(config.num_classes));
          for (int f = 0; f < K; ++f) raw[static_cast<std::size_t>(f)] = out.grid(channel_of(config, a, f), i, j);
          for (int k = 0; k < config.num_classes; ++k) probs[static_cast<std::size_t>(k)] = sigmoid(raw[static_cast<std::size_t>(5 + k)]);
          anchors.push_back({{"anchor", a},
                             {"box", {{"cx", d.box.cx}, {"cy", d.box.cy}, {"w", d.box.w}, {"h", d.box.h}}},
                             {"confidence", d.confidence},
                             {"class_id", d.class_id},
                             {"class_probs", probs},
                             {"raw", raw}});
        }
        cells.push_back({{"i", i}, {"j", j}, {"anchors", anchors}});
      }
    }
    pathways.push_back({{"pathway", pathway_name(out.pathway)}, {"stride", out.stride}, {"grid", S}, {"cells", cells}});
  }
  const std::vector<Detection> kept = nms(all, nms_options);
  return Json{{"v", kApiVersion},
              {"image_size", config.input_size},
              {"proposals", all.size()},
              {"pathways", pathways},
              {"detections", to_json(kept)},
              {"nms", {{"conf", nms_options.conf_threshold}, {"iou", nms_options.iou_threshold}}}};
}

Json saliency_payload(const SaliencyMap& map) {
  return Json{{"v", kApiVersion}, {"map", to_json(map)}, {"png_base64", base64_encode(heatmap_png(map))}};
}

InspectionSession::InspectionSession(Checkpoint checkpoint, std::optional<Dataset> dataset, NmsOptions nms_options)
    : checkpoint_(std::make_shared<const Checkpoint>(std::move(checkpoint))),
      dataset_(std::move(dataset)),
      nms_options_(nms_options) {}

std::shared_ptr<const Checkpoint> InspectionSession::snapshot() const {
  std::shared_lock lock(checkpoint_mutex_);
  return checkpoint_;
}

Json InspectionSession::config() const {
  const auto ckpt = snapshot();
  const ModelConfig& c = ckpt->state.config;
  Json grids = Json::array();
  for (Pathway p : kAllPathways) {
    grids.push_back({{"pathway", pathway_name(p)}, {"stride", c.stride(p)}, {"grid", c.grid(p)}});
  }
  return Json{{"v", kApiVersion},
              {"model", to_json(c)},
              {"config_hash", config_hash(c)},
              {"grids", grids},
              {"priors", to_json(ckpt->priors)},
              {"tap_layers", c.tap_layers},
              {"proposals", count_proposals(c)},
              {"class_names", {"disk", "square", "triangle"}},
              {"neurons", {"x", "y", "w", "h", "c", "p"}}};
}

Json InspectionSession::images() const {
  Json ids = Json::array();
  if (dataset_) {
    for (const Sample& s : dataset_->samples) ids.push_back(s.id);
  }
  return Json{{"v", kApiVersion}, {"images", ids}};
}

std::string InspectionSession::image_png(const std::string& id) const {
  if (!dataset_) throw NotFound("no dataset loaded");
  for (const Sample& s : dataset_->samples) {
    if (s.id == id) return encode_png(s.image);
  }
  throw NotFound("unknown image id '" + id + "'");
}

Tensor InspectionSession::resolve_image(const Json& request) const {
  if (!request.is_object()) throw BadRequest("request body must be a JSON object");
  if (request.contains("image_id")) {
    if (!request["image_id"].is_string()) throw BadRequest("image_id must be a string");
    if (!dataset_) throw NotFound("no dataset loaded");
    const std::string id = request["image_id"].get<std::string>();
    for (const Sample& s : dataset_->samples) {
      if (s.id == id) return s.image;
    }
    throw NotFound("unknown image id '" + id + "'");
  }
  if (request.contains("png_base64")) {
    if (!request["png_base64"].is_string()) throw BadRequest("png_base64 must be a string");
    try {
      return decode_png(base64_decode(request["png_base64"].get<std::string>()));
    } catch (const Error& e) {
      throw BadRequest(e.what());
    }
  }
  throw BadRequest("request needs image_id or png_base64");
}

Json InspectionSession::cached_infer(const Tensor& image) {
  const auto ckpt = snapshot();
  const int size = ckpt->state.config.input_size;
  if (image.dim(0) != 3 || image.dim(1) != size || image.dim(2) != size) {
    throw BadRequest("image must be " + std::to_string(size) + "x" + std::to_string(size) + " pixels");
  }
  std::uint64_t generation = 0;
  const std::uint64_t key = fnv1a(image.data(), static_cast<std::size_t>(image.size()) * sizeof(double));
  {
    std::lock_guard lock(cache_mutex_);
    generation = generation_;
    auto it = cache_.find(key);
    if (it != cache_.end()) return *it->second;
  }
  auto payload = std::make_shared<const Json>(inference_payload(*ckpt, image, nms_options_));
  std::lock_guard lock(cache_mutex_);
  if (generation == generation_) cache_.emplace(key, payload);
  return *payload;
}

Json InspectionSession::infer(const Json& request) {
  Json payload = cached_infer(resolve_image(request));
  payload["shift"] = {{"dx", 0}, {"dy", 0}};
  return payload;
}

Json InspectionSession::shift(const Json& request) {
  const Tensor image = resolve_image(request);
  auto int_field = [&](const char* key) {
    if (!request.contains(key)) return 0;
    if (!request[key].is_number_integer()) throw BadRequest(std::string(key) + " must be an integer");
    return request[key].get<int>();
  };
  const int dx = int_field("dx"), dy = int_field("dy");
  const int size = image.dim(1);
  if (std::abs(dx) >= size || std::abs(dy) >= size) throw BadRequest("shift exceeds the image size");
  Json payload = cached_infer(shift_image(image, dx, dy));
  payload["shift"] = {{"dx", dx}, {"dy", dy}};
  return payload;
}

Json InspectionSession::saliency(const Json& request) const {
  if (!request.is_object()) throw BadRequest("request body must be a JSON object");
  if (!dataset_) throw NotFound("no dataset loaded");
  const auto ckpt = snapshot();
  const ModelConfig& config = ckpt->state.config;
  CellAddress cell;
  NeuronKind kind = NeuronKind::c;
  int class_id = 0, n = 15;
  std::string tap;
  try {
    class_id = request.at("class_id").get<int>();
    cell.pathway = parse_pathway(request.at("pathway").get<std::string>());
    cell.i = request.at("i").get<int>();
    cell.j = request.at("j").get<int>();
    cell.anchor = request.at("anchor").get<int>();
    kind = parse_neuron(request.at("neuron").get<std::string>());
    tap = request.at("tap_layer").get<std::string>();
    if (request.contains("n")) n = request["n"].get<int>();
  } catch (const Json::exception& e) {
    throw BadRequest(std::string("saliency request: ") + e.what());
  } catch (const Error& e) {
    throw BadRequest(e.what());
  }
  if (class_id < 0 || class_id >= config.num_classes) throw BadRequest("class_id out of range");
  if (n < 1) throw BadRequest("n must be positive");
  const int S = config.grid(cell.pathway);
  if (cell.i < 0 || cell.j < 0 || cell.i >= S || cell.j >= S) throw BadRequest("cell outside the grid");
  if (cell.anchor < 0 || cell.anchor >= config.anchors_per_cell) throw BadRequest("anchor out of range");
  if (std::find(config.tap_layers.begin(), config.tap_layers.end(), tap) == config.tap_layers.end()) {
    throw BadRequest("unknown tap layer '" + tap + "'");
  }
  if (is_border_cell(cell, config)) {
    throw Unprocessable("border cells are excluded from averaged saliency");
  }
  if (select_images_for_cell(dataset_->samples, class_id, cell, config).empty()) {
    throw Unprocessable("no dataset image has this class under the cell");
  }
  return saliency_payload(saliency_averaged(ckpt->state, dataset_->samples, class_id, cell, kind, tap, n));
}

void InspectionSession::reload(Checkpoint checkpoint) {
  auto next = std::make_shared<const Checkpoint>(std::move(checkpoint));
  {
    std::unique_lock lock(checkpoint_mutex_);
    checkpoint_ = std::move(next);
  }
  std::lock_guard lock(cache_mutex_);
  cache_.clear();
  ++generation_;
}

std::size_t InspectionSession::cache_size() const {
  std::lock_guard lock(cache_mutex_);
  return cache_.size();
}

namespace {

void reply_json(httplib::Response& res, const Json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

template <typename Handler>
void guarded(httplib::Response& res, Handler&& handler) {
  try {
    handler();
  } catch (const BadRequest& e) {
    reply_json(res, {{"v", kApiVersion}, {"error", e.what()}}, 400);
  } catch (const NotFound& e) {
    reply_json(res, {{"v", kApiVersion}, {"error", e.what()}}, 404);
  } catch (const Unprocessable& e) {
    reply_json(res, {{"v", kApiVersion}, {"error", e.what()}}, 422);
  } catch (const Json::exception& e) {
    reply_json(res, {{"v", kApiVersion}, {"error", e.what()}}, 400);
  } catch (const std::exception& e) {
    reply_json(res, {{"v", kApiVersion}, {"error", e.what()}}, 500);
  }
}

Json parse_body(const httplib::Request& req) {
  try {
    return Json::parse(req.body);
  } catch (const Json::exception& e) {
    throw BadRequest(std::string("malformed JSON body: ") + e.what());
  }
}

}  // namespace

HttpService::HttpService(InspectionSession& session, std::optional<std::filesystem::path> static_dir)
    : server_(std::make_unique<httplib::Server>()) {
  auto& s = *server_;
  s.Get("/api/config", [&session](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] { reply_json(res, session.config()); });
  });
  s.Get("/api/images", [&session](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] { reply_json(res, session.images()); });
  });
  s.Get(R"(/api/image/([^/]+))", [&session](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { res.set_content(session.image_png(req.matches[1]), "image/png"); });
  });
  s.Post("/api/infer", [&session](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { reply_json(res, session.infer(parse_body(req))); });
  });
  s.Post("/api/shift", [&session](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { reply_json(res, session.shift(parse_body(req))); });
  });
  s.Post("/api/saliency", [&session](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { reply_json(res, session.saliency(parse_body(req))); });
  });
  if (static_dir) {
    if (!s.set_mount_point("/", static_dir->string())) {
      throw Error("serve: static directory '" + static_dir->string() + "' does not exist");
    }
  }
}

HttpService::~HttpService() { stop(); }

int HttpService::bind(const std::string& host, int port) {
  if (port == 0) {
    const int bound = server_->bind_to_any_port(host);
    if (bound < 0) throw Error("serve: cannot bind " + host);
    return bound;
  }
  if (!server_->bind_to_port(host, port)) throw Error("serve: cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void HttpService::serve() { server_->listen_after_bind(); }

void HttpService::stop() {
  if (server_) server_->stop();
}

}  // namespace myolo
