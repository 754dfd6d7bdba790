#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>

#include "mdvit/config.hpp"
#include "mdvit/model.hpp"

namespace mdvit {

// Checkpoint layout (all integers little-endian):
//
//   char[8]   magic "MDVITCKP"
//   u32       format version (1)
//   u32       kind: 0 = inference (universal network only), 1 = training
//   i64       trained domain for separately trained models, -1 otherwise
//   u64       byte length L of the config snapshot
//   char[L]   config snapshot in the key=value format
//   u64       tensor count T
//   T times:
//     u32       name length, then the name bytes ("universal.<param>" or
//               "peer<m>.<param>")
//     u32       rank R, then R x i64 dimensions
//     f32[...]  row-major values
enum class CheckpointKind : uint32_t { kInference = 0, kTraining = 1 };

struct CheckpointInfo {
  ExperimentConfig config;
  CheckpointKind kind = CheckpointKind::kInference;
  std::optional<int64_t> trained_domain;
};

/// Inference checkpoints drop the auxiliary peers.
void save_checkpoint(const std::filesystem::path& path, const Model& model,
                     const CheckpointInfo& info);

struct LoadedCheckpoint {
  CheckpointInfo info;
  Model model;
};

/// Rebuilds the model from the config snapshot and copies every tensor in.
/// Throws DataError on IO failure, ParseError on a bad header and ShapeError
/// when a tensor does not fit the rebuilt model.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace mdvit
