// Copyright 2026 The myolo Authors
// SPDX-License-Identifier: Apache-2.0

#include "myolo/serialize.hpp"

#include <cstdio>

namespace myolo {

Json to_json(const ModelConfig& c) {
  return Json{{"input_size", c.input_size},       {"num_classes", c.num_classes},
              {"anchors_per_cell", c.anchors_per_cell}, {"strides", c.strides},
              {"backbone_widths", c.backbone_widths}, {"head_width", c.head_width},
              {"leaky_alpha", c.leaky_alpha},     {"tap_layers", c.tap_layers}};
}

ModelConfig model_config_from_json(const Json& j) {
  try {
    ModelConfig c;
    c.input_size = j.at("input_size").get<int>();
    c.num_classes = j.at("num_classes").get<int>();
    c.anchors_per_cell = j.at("anchors_per_cell").get<int>();
    c.strides = j.at("strides").get<std::array<int, kPathways>>();
    c.backbone_widths = j.at("backbone_widths").get<std::vector<int>>();
    c.head_width = j.at("head_width").get<int>();
    c.leaky_alpha = j.at("leaky_alpha").get<double>();
    c.tap_layers = j.at("tap_layers").get<std::vector<std::string>>();
    c.validate();
    return c;
  } catch (const Json::exception& e) {
    throw Error(std::string("model config json: ") + e.what());
  }
}

Json to_json(const AnchorSet& priors) {
  Json arr = Json::array();
  for (const AnchorPrior& p : priors.all()) {
    arr.push_back({{"pathway", pathway_name(p.pathway)}, {"anchor", p.anchor_index}, {"pw", p.pw}, {"ph", p.ph}});
  }
  return arr;
}

AnchorSet anchor_set_from_json(const Json& j, int anchors_per_pathway) {
  try {
    std::vector<std::array<double, 2>> extents;
    for (const Json& p : j) extents.push_back({p.at("pw").get<double>(), p.at("ph").get<double>()});
    AnchorSet set(std::move(extents), anchors_per_pathway);
    for (std::size_t n = 0; n < j.size(); ++n) {
      const AnchorPrior& prior = set.all()[n];
      if (parse_pathway(j[n].at("pathway").get<std::string>()) != prior.pathway ||
          j[n].at("anchor").get<int>() != prior.anchor_index) {
        throw Error("anchor priors json: entries are not sorted by area");
      }
    }
    return set;
  } catch (const Json::exception& e) {
    throw Error(std::string("anchor priors json: ") + e.what());
  }
}

Json to_json(const Annotation& ann) {
  return Json{{"cx", ann.box.cx}, {"cy", ann.box.cy}, {"w", ann.box.w}, {"h", ann.box.h},
              {"class_id", ann.class_id}};
}

Annotation annotation_from_json(const Json& j) {
  try {
    return {{j.at("cx").get<double>(), j.at("cy").get<double>(), j.at("w").get<double>(),
             j.at("h").get<double>()},
            j.at("class_id").get<int>()};
  } catch (const Json::exception& e) {
    throw Error(std::string("annotation json: ") + e.what());
  }
}

std::string canonical(const Json& j) { return j.dump(); }

std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t basis) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  std::uint64_t h = basis;
  for (std::size_t n = 0; n < size; ++n) {
    h ^= bytes[n];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string config_hash(const ModelConfig& config) {
  const std::string text = canonical(to_json(config));
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(text.data(), text.size())));
  return buf;
}

}  // namespace myolo
