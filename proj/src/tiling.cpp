#include "tbscreen/tiling.hpp"

#include <algorithm>

#include "tbscreen/error.hpp"

namespace tbscreen {

std::vector<std::size_t> axis_anchors(std::size_t extent, std::size_t side, std::size_t stride) {
  if (side > extent || stride == 0)
    throw GeometryError("patch side " + std::to_string(side) + " does not fit extent " +
                        std::to_string(extent));
  std::vector<std::size_t> out;
  for (std::size_t a = 0; a + side <= extent; a += stride) out.push_back(a);
  if (out.back() + side < extent) out.push_back(extent - side);
  return out;
}

PatchGrid plan_grid(std::size_t image_w, std::size_t image_h, std::size_t patch_side,
                    std::size_t overlap) {
  if (patch_side == 0) throw GeometryError("patch side must be positive");
  if (overlap >= patch_side)
    throw GeometryError("overlap " + std::to_string(overlap) + " must be smaller than patch side " +
                        std::to_string(patch_side));
  if (patch_side > std::min(image_w, image_h))
    throw GeometryError("patch side " + std::to_string(patch_side) + " exceeds image " +
                        std::to_string(image_w) + "x" + std::to_string(image_h));
  PatchGrid grid{image_w, image_h, patch_side, overlap, {}};
  const auto xs = axis_anchors(image_w, patch_side, grid.stride());
  const auto ys = axis_anchors(image_h, patch_side, grid.stride());
  grid.anchors.reserve(xs.size() * ys.size());
  for (auto y : ys)
    for (auto x : xs) grid.anchors.push_back({x, y});
  return grid;
}

namespace {
void check_image(const Tensor& image, const PatchGrid& grid) {
  if (image.rank() != 3 || image.dim(0) != 1 || image.dim(1) != grid.image_h ||
      image.dim(2) != grid.image_w)
    throw GeometryError("image " + shape_string(image.shape()) + " does not match grid " +
                        std::to_string(grid.image_w) + "x" + std::to_string(grid.image_h));
}
}  // namespace

Tensor extract_patch(const Tensor& image, const PatchGrid& grid, std::size_t index) {
  check_image(image, grid);
  if (index >= grid.anchors.size()) throw GeometryError("patch index out of range");
  const auto [x0, y0] = grid.anchors[index];
  const std::size_t side = grid.patch_side;
  Tensor patch({1, side, side});
  const auto src = image.data();
  auto dst = patch.data();
  for (std::size_t y = 0; y < side; ++y)
    std::copy_n(src.data() + (y0 + y) * grid.image_w + x0, side, dst.data() + y * side);
  return patch;
}

std::vector<PatchRecord> extract_patches(const Tensor& image, const PatchGrid& grid,
                                         const std::string& source_image_id) {
  check_image(image, grid);
  std::vector<PatchRecord> out;
  out.reserve(grid.anchors.size());
  for (std::size_t i = 0; i < grid.anchors.size(); ++i)
    out.push_back({i, grid.anchors[i], extract_patch(image, grid, i), source_image_id});
  return out;
}

Tensor paste_patches(const std::vector<PatchRecord>& patches, std::size_t image_w,
                     std::size_t image_h) {
  Tensor canvas({1, image_h, image_w}, 0.0);
  auto dst = canvas.data();
  for (const auto& p : patches) {
    const std::size_t side = p.pixels.dim(2);
    if (p.anchor.x + side > image_w || p.anchor.y + side > image_h)
      throw GeometryError("patch at anchor exceeds canvas");
    const auto src = p.pixels.data();
    for (std::size_t y = 0; y < side; ++y)
      std::copy_n(src.data() + y * side, side, dst.data() + (p.anchor.y + y) * image_w + p.anchor.x);
  }
  return canvas;
}

Tensor coverage_map(const PatchGrid& grid) {
  Tensor counts({grid.image_h, grid.image_w}, 0.0);
  auto c = counts.data();
  for (const auto& a : grid.anchors)
    for (std::size_t y = a.y; y < a.y + grid.patch_side; ++y) {
      double* row = c.data() + y * grid.image_w;
      for (std::size_t x = a.x; x < a.x + grid.patch_side; ++x) row[x] += 1.0;
    }
  return counts;
}

}  // namespace tbscreen
