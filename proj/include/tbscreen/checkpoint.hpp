#pragma once

// Versioned binary container for model weights.
//
// Layout (little-endian):
//   magic "TBSCKPT\0" | u32 version | u64 payload length | payload | u32 CRC-32
// The CRC covers every byte before it. The payload holds the family tag, the
// architecture config as key/value strings, training metadata and a list of
// named tensors (rank, extents, raw doubles).

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "tbscreen/aggregation.hpp"
#include "tbscreen/capsnet.hpp"
#include "tbscreen/model.hpp"

namespace tbscreen {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct TrainingMetadata {
  std::uint64_t seed = 0;
  std::uint64_t epochs = 0;
  double final_loss = 0.0;
  friend bool operator==(const TrainingMetadata&, const TrainingMetadata&) = default;
};

struct Checkpoint {
  std::string family;
  ConfigMap config;
  TrainingMetadata metadata;
  std::vector<NamedTensor> tensors;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& checkpoint,
                                            std::uint32_t version = kCheckpointVersion);
/// Throws TruncatedError, ChecksumError, VersionError or FormatError.
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

Checkpoint to_checkpoint(const PatchModel& model, const TrainingMetadata& metadata);
/// Rebuilds whichever patch classifier family the checkpoint holds.
std::unique_ptr<PatchModel> patch_model_from(const Checkpoint& checkpoint);
/// Throws FamilyMismatchError unless the checkpoint holds a capsule network.
CapsNetModel capsnet_from(const Checkpoint& checkpoint);

/// Whole-image head plus the tiling it was trained with.
struct LogisticBundle {
  LogisticModel model;
  std::size_t bins = 2;
  std::size_t image_w = 0;
  std::size_t image_h = 0;
  std::size_t patch_side = 256;
  std::size_t overlap = 20;
  std::size_t downsample = 4;

  static constexpr const char* kFamily = "logistic";
};

Checkpoint to_checkpoint(const LogisticBundle& bundle, const TrainingMetadata& metadata);
/// Throws FamilyMismatchError unless the checkpoint holds a logistic head.
LogisticBundle logistic_from(const Checkpoint& checkpoint);

bool bit_identical(const Checkpoint& a, const Checkpoint& b);

}  // namespace tbscreen
