#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "tbscreen/model.hpp"
#include "tbscreen/synth.hpp"
#include "tbscreen/tiling.hpp"

namespace tbscreen {

/// Cord boxes of one full image, enough to label its patches.
struct SceneTruth {
  std::string image_id;
  std::size_t image_w = 0;
  std::size_t image_h = 0;
  std::vector<CordBox> boxes;
};

struct LabeledPatch {
  std::string image_id;
  std::size_t grid_index = 0;
  Anchor anchor;
  Label label = Label::negative;
};

enum class Split { train, test };

struct LabeledPatchSet {
  std::vector<LabeledPatch> patches;
  Split split = Split::train;
  std::string provenance;
};

struct PatchDatasetOptions {
  std::size_t patch_side = 256;
  std::size_t overlap = 20;
  std::size_t per_class_cap = 500;
  double train_fraction = 0.9;
  std::uint64_t seed = 0;
  /// Skip negative candidates that touch any cord box at all.
  bool exclude_partial_negatives = true;
};

struct PatchDataset {
  LabeledPatchSet train;
  LabeledPatchSet test;
};

/// Class-balanced sampling without replacement of per_class_cap patches per
/// class, split train/test per class by a seeded shuffle. A patch is positive
/// iff it covers at least kPositiveBoxFraction of some cord box. Throws
/// ShortageError naming the class that has too few candidates.
PatchDataset make_patch_dataset(std::span<const SceneTruth> scenes, const PatchDatasetOptions& options);

// ---------------------------------------------------------------------------
// Manifests: tab-separated text, one record per line, LF endings. Relative
// image paths are resolved against the manifest's directory.

struct PatchManifestEntry {
  std::filesystem::path image;
  Anchor anchor;
  Label label = Label::negative;
};

struct ImageManifestEntry {
  std::filesystem::path image;
  Label label = Label::negative;
};

struct BoxManifestEntry {
  std::filesystem::path image;
  CordBox box;
};

std::vector<PatchManifestEntry> read_patch_manifest(const std::filesystem::path& path);
std::vector<ImageManifestEntry> read_image_manifest(const std::filesystem::path& path);
std::vector<BoxManifestEntry> read_box_manifest(const std::filesystem::path& path);

/// Entries are written with paths relative to the manifest directory when
/// they lie beneath it.
void write_patch_manifest(const std::filesystem::path& path, std::span<const PatchManifestEntry> entries);
void write_image_manifest(const std::filesystem::path& path, std::span<const ImageManifestEntry> entries);
void write_box_manifest(const std::filesystem::path& path, std::span<const BoxManifestEntry> entries);

/// Writes `content` to a sibling temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

}  // namespace tbscreen
