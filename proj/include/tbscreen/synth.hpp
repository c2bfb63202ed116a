#pragma once

// Procedural stand-in for reconstructed lens-free micrographs: a smooth
// background with debris blobs, sensor noise and, for positive images,
// serpentine chained-segment "cords".

#include <cstdint>
#include <vector>

#include "tbscreen/model.hpp"
#include "tbscreen/tensor.hpp"
#include "tbscreen/tiling.hpp"

namespace tbscreen {

struct IntRange {
  std::int64_t min = 0;
  std::int64_t max = 0;
};

struct RealRange {
  double min = 0.0;
  double max = 0.0;
};

struct SyntheticSceneConfig {
  std::size_t image_w = 3840;
  std::size_t image_h = 2700;
  double background = 0.55;
  double illumination_amplitude = 0.05;

  IntRange cord_count{40, 80};
  IntRange cord_segments{3, 8};
  RealRange cord_step{4.0, 10.0};  // pixels per segment
  double cord_max_turn_deg = 35.0;
  RealRange cord_thickness{2.0, 4.0};
  double cord_delta = -0.35;

  IntRange debris_count{150, 300};
  RealRange debris_radius{2.0, 6.0};
  double debris_delta = 0.25;
  /// Fraction of debris drawn dark (with delta * dark_debris_scale).
  double dark_debris_fraction = 0.25;
  double dark_debris_scale = -0.4;

  double noise_sigma = 0.03;
  double speckle_density = 5e-4;
  std::size_t blur_radius = 1;

  std::uint64_t seed = 0;

  /// Throws ConfigError on empty or inverted ranges.
  void validate() const;
};

/// A gentler scene: thicker, darker cords, sparse bright-only debris and
/// less noise. Other fields keep their defaults.
SyntheticSceneConfig easy_scene();

/// Half-open pixel box [x0, x1) x [y0, y1).
struct CordBox {
  std::size_t x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  std::size_t area() const { return (x1 - x0) * (y1 - y0); }
  friend bool operator==(const CordBox&, const CordBox&) = default;
};

struct SyntheticImage {
  Tensor image;  // [1, H, W] in [0, 1]
  std::vector<CordBox> boxes;
  Label label = Label::negative;
};

/// Deterministic per config (including seed). The image is positive iff at
/// least one cord was drawn. Throws GenerationError if a cord cannot be
/// placed inside the image within a bounded number of attempts.
SyntheticImage generate_synthetic_image(const SyntheticSceneConfig& config);

/// Minimum share of a cord box that must fall inside a patch for the patch
/// to count as positive.
inline constexpr double kPositiveBoxFraction = 0.25;

/// Largest fraction of any box's area covered by the square patch.
double max_box_fraction(const Anchor& anchor, std::size_t side, const std::vector<CordBox>& boxes);
Label label_patch(const Anchor& anchor, std::size_t side, const std::vector<CordBox>& boxes);

}  // namespace tbscreen
