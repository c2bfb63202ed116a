#pragma once

// Full-image screening: tile, downsample and score every patch, then turn
// the score histogram into an image-level probability.

#include <filesystem>
#include <span>
#include <vector>

#include "tbscreen/aggregation.hpp"
#include "tbscreen/checkpoint.hpp"
#include "tbscreen/dataset.hpp"
#include "tbscreen/model.hpp"
#include "tbscreen/tiling.hpp"

namespace tbscreen {

/// Typical spread of pixel values inside a patch; centred patches are divided
/// by it so the first convolutions see unit-scale inputs.
inline constexpr double kPatchContrastScale = 0.1;

/// Mean-pools a [1, side, side] patch by `factor`, subtracts its mean and
/// divides by kPatchContrastScale. This is the model input.
Tensor prepare_patch(const Tensor& patch, std::size_t factor);

/// Loads the listed patches, reading each image once, and prepares them.
std::vector<PatchSample> load_patch_samples(std::span<const PatchManifestEntry> entries,
                                            std::size_t patch_side, std::size_t factor);

/// Positive score of every grid patch, in grid order. Patches are scored in
/// parallel against the read-only model.
std::vector<double> score_image(const PatchModel& model, const Tensor& image, const PatchGrid& grid,
                                std::size_t factor);

struct ImageReport {
  PatchGrid grid;
  std::vector<double> patch_scores;
  HistogramFeature histogram;
  double probability = 0.0;
  Label label = Label::negative;
};

/// Throws GeometryError if the image extents differ from those the bundle
/// was trained with.
ImageReport predict_image(const PatchModel& model, const LogisticBundle& head, const Tensor& image);

/// Histogram feature of one image under the bundle's tiling.
HistogramFeature image_feature(const PatchModel& model, const LogisticBundle& head,
                               const Tensor& image);

}  // namespace tbscreen
