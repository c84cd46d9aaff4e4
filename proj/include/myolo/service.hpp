// Copyright 2026 The myolo Authors
// SPDX-License-Identifier: Apache-2.0

// Inspection backend for the interactive explorer. All endpoints read an
// immutable checkpoint snapshot; responses carry "v": 1.
//
//   GET  /api/config      model config, grids, priors, tap layers
//   GET  /api/images      dataset image ids
//   GET  /api/image/{id}  PNG
//   POST /api/infer       {image_id | png_base64}
//   POST /api/shift       {image_id | png_base64, dx, dy}   zero-filled shift
//   POST /api/saliency    {class_id, pathway, i, j, anchor, neuron, tap_layer, n}

#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>

#include "myolo/checkpoint.hpp"
#include "myolo/postprocess.hpp"
#include "myolo/saliency.hpp"
#include "myolo/serialize.hpp"
#include "myolo/shapesdata.hpp"

namespace httplib {
class Server;
}

namespace myolo {

inline constexpr int kApiVersion = 1;

class BadRequest : public Error {
 public:
  using Error::Error;
};
class NotFound : public Error {
 public:
  using Error::Error;
};
class Unprocessable : public Error {
 public:
  using Error::Error;
};

/// Image content moved by (dx, dy) pixels; uncovered pixels are zero.
Tensor shift_image(const Tensor& image, int dx, int dy);

/// Every cell/anchor of every pathway (decoded box, confidence, class probs,
/// raw channels) plus the NMS survivors.
Json inference_payload(const Checkpoint& ckpt, const Tensor& image, const NmsOptions& nms_options);

Json saliency_payload(const SaliencyMap& map);

class InspectionSession {
 public:
  InspectionSession(Checkpoint checkpoint, std::optional<Dataset> dataset, NmsOptions nms_options = {});

  Json config() const;
  Json images() const;
  std::string image_png(const std::string& id) const;

  Json infer(const Json& request);
  Json shift(const Json& request);
  Json saliency(const Json& request) const;

  /// Swaps the checkpoint and drops cached forward results.
  void reload(Checkpoint checkpoint);
  std::size_t cache_size() const;

 private:
  Tensor resolve_image(const Json& request) const;
  Json cached_infer(const Tensor& image);

  std::shared_ptr<const Checkpoint> snapshot() const;

  mutable std::shared_mutex checkpoint_mutex_;
  std::shared_ptr<const Checkpoint> checkpoint_;
  std::optional<Dataset> dataset_;
  NmsOptions nms_options_;

  mutable std::mutex cache_mutex_;
  std::map<std::uint64_t, std::shared_ptr<const Json>> cache_;
  std::uint64_t generation_ = 0;
};

/// HTTP front end over a session. Optionally serves a static UI bundle at "/".
class HttpService {
 public:
  HttpService(InspectionSession& session, std::optional<std::filesystem::path> static_dir = {});
  ~HttpService();

  /// Binds to host:port (0 picks a free port) and returns the bound port.
  int bind(const std::string& host, int port);
  /// Blocks serving requests until stop().
  void serve();
  void stop();

 private:
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace myolo
