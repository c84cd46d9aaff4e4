// Copyright 2026 The myolo Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>

namespace myolo {

/// Entry point behind the `myolo` executable:
///   generate | train | detect | count | shift-sweep | saliency | serve
/// Returns the process exit code; diagnostics go to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace myolo
