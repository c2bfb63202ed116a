#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "tbscreen/tensor.hpp"

namespace tbscreen {

struct Anchor {
  std::size_t x = 0;
  std::size_t y = 0;
  friend bool operator==(const Anchor&, const Anchor&) = default;
};

/// Overlapping square tiling of an image. Anchors are top-left corners in
/// row-major order (y outer, x inner).
struct PatchGrid {
  std::size_t image_w = 0;
  std::size_t image_h = 0;
  std::size_t patch_side = 256;
  std::size_t overlap = 20;
  std::vector<Anchor> anchors;

  std::size_t stride() const { return patch_side - overlap; }
  std::size_t size() const { return anchors.size(); }
};

/// Anchor offsets along one axis: 0, stride, 2*stride, ... while the window
/// fits, then one edge-aligned offset (extent - side) if the last regular
/// window stops short of the edge.
std::vector<std::size_t> axis_anchors(std::size_t extent, std::size_t side, std::size_t stride);

/// Throws GeometryError if the patch does not fit the image or overlap is
/// not in [0, patch_side).
PatchGrid plan_grid(std::size_t image_w, std::size_t image_h, std::size_t patch_side = 256,
                    std::size_t overlap = 20);

struct PatchRecord {
  std::size_t grid_index = 0;
  Anchor anchor;
  Tensor pixels;  // [1, side, side]
  std::string source_image_id;
};

/// Crop of patch `index`; image is [1, H, W] and must match the grid extents.
Tensor extract_patch(const Tensor& image, const PatchGrid& grid, std::size_t index);
std::vector<PatchRecord> extract_patches(const Tensor& image, const PatchGrid& grid,
                                         const std::string& source_image_id = {});

/// Writes every patch back at its anchor into a [1, H, W] canvas.
Tensor paste_patches(const std::vector<PatchRecord>& patches, std::size_t image_w,
                     std::size_t image_h);

/// Per-pixel count of covering patches, shape [H, W].
Tensor coverage_map(const PatchGrid& grid);

}  // namespace tbscreen
