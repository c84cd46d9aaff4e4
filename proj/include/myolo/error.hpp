// Copyright 2026 The myolo Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace myolo {

/// Raised for every contract violation inside the library. The message is the
/// diagnostic surfaced on stderr by the CLI and in HTTP error bodies.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace myolo
