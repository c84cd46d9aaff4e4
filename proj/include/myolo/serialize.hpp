// Copyright 2026 The myolo Authors
// SPDX-License-Identifier: Apache-2.0

// JSON encodings shared by the checkpoint header, the dataset files, the CLI
// outputs and the HTTP service.

#pragma once

#include <json.hpp>

#include <cstdint>
#include <string>
#include <vector>

#include "myolo/assign.hpp"
#include "myolo/boxes.hpp"
#include "myolo/model.hpp"

namespace myolo {

using Json = nlohmann::json;

Json to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const Json& j);

Json to_json(const AnchorSet& priors);
AnchorSet anchor_set_from_json(const Json& j, int anchors_per_pathway);

Json to_json(const Annotation& ann);
Annotation annotation_from_json(const Json& j);

/// Keys are sorted and numbers printed round-trip exact, so equal configs
/// always serialize to identical bytes.
std::string canonical(const Json& j);

/// 16 hex digits of FNV-1a over the canonical config JSON.
std::string config_hash(const ModelConfig& config);

std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t basis = 0xcbf29ce484222325ULL);

}  // namespace myolo
