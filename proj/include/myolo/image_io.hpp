// Copyright 2026 The myolo Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>

#include "myolo/tensor.hpp"

namespace myolo {

/// [0,1] -> {0..255}, round half up, clamped.
std::uint8_t to_byte(double v);

/// 8-bit RGB PNG from interleaved pixels.
std::string encode_png_rgb(int width, int height, std::span<const std::uint8_t> rgb);
/// 8-bit RGB PNG from a [3,H,W] tensor in [0,1].
std::string encode_png(const Tensor& image);
/// Any PNG (gray, palette, alpha, 16-bit) -> [3,H,W] in [0,1].
Tensor decode_png(std::string_view bytes);

void write_file(const std::filesystem::path& path, std::string_view bytes);
std::string read_file(const std::filesystem::path& path);

std::string base64_decode(std::string_view text);
std::string base64_encode(std::string_view bytes);

}  // namespace myolo
