// Copyright 2026 The myolo Authors
// SPDX-License-Identifier: Apache-2.0

// Checkpoint container:
//
//   MYOLO1\n
//   config <canonical JSON: {"model", "priors", "meta"}>\n
//   hash <config hash>\n
//   tensors <N>\n
//   <name> <byte offset> <d0>x<d1>x...\n        (N lines, sorted by name)
//   payload <bytes>\n
//   <raw little-endian IEEE-754 float64 values>

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "myolo/boxes.hpp"
#include "myolo/model.hpp"
#include "myolo/train.hpp"

namespace myolo {

inline constexpr const char* kCheckpointTag = "MYOLO1";

struct TrainingMeta {
  int epochs = 0;
  std::vector<EpochLoss> loss_curve;
};

struct Checkpoint {
  ModelState state;
  AnchorSet priors;
  TrainingMeta meta;
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
/// Throws Error on a bad tag, version, hash, tensor table or truncated payload.
/// When `expected` is given, a checkpoint built for another config is rejected.
Checkpoint parse_checkpoint(const std::string& bytes, const std::optional<ModelConfig>& expected = {});

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path,
                           const std::optional<ModelConfig>& expected = {});

}  // namespace myolo
