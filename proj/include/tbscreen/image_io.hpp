#pragma once

#include <filesystem>

#include "tbscreen/tensor.hpp"

namespace tbscreen {

/// Reads an 8- or 16-bit grayscale PNG or PGM (P5/P2) into [1, H, W] with
/// values p / max_value.
///
/// Errors: IoError (cannot open/read), NotGrayscaleError (colour or
/// alpha image), UnsupportedDepthError (bit depth other than 8/16),
/// ImageFormatError (unknown or corrupt file).
Tensor load_image(const std::filesystem::path& path);

/// Writes [1, H, W] (or [H, W]) values in [0, 1] as grayscale; the format
/// follows the extension (.png or .pgm). Values are clamped and rounded to
/// the nearest level of the bit depth.
void save_image(const std::filesystem::path& path, const Tensor& image, int bit_depth = 8);

}  // namespace tbscreen
