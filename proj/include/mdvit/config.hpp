#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>

namespace mdvit {

/// Architectural hyperparameters shared by every model component.
///
/// The defaults describe the full-size network: four encoder levels of
/// [64, 128, 320, 512] channels, two transformer layers per block, eight
/// attention heads, a 1024-wide convolutional bridge and 512-wide auxiliary
/// peers. `da_enabled = false` together with `mkd_enabled = false` is the
/// plain baseline.
struct ModelConfig {
  std::array<int64_t, 2> image_size{256, 256};  // (H, W)
  int64_t num_domains = 4;
  std::array<int64_t, 4> encoder_channels{64, 128, 320, 512};
  std::array<int64_t, 8> layers_per_block{2, 2, 2, 2, 2, 2, 2, 2};
  int64_t num_heads = 8;
  int64_t bridge_hidden = 1024;
  int64_t peer_hidden = 512;
  int64_t da_reduction = 2;
  bool da_enabled = true;
  bool mkd_enabled = true;
  double alpha = 0.5;
  double beta = 0.5;

  /// Throws ValidationError naming the first violated invariant.
  void validate() const;

  /// Per-head channel width K of encoder level `level` (0-based).
  int64_t head_dim(int level) const;
  /// Width K/r of the domain-aware vector at encoder level `level`.
  int64_t adapter_dim(int level) const;

  bool operator==(const ModelConfig&) const = default;
};

enum class Paradigm { kSeparate, kJoint, kMultiDomainAdaptive };

std::string_view paradigm_name(Paradigm p);  // "st" | "jt" | "mat"
Paradigm parse_paradigm(std::string_view text);

/// Geometric and photometric augmentation toggles. Each enabled operation
/// fires independently with `probability`.
struct AugmentConfig {
  bool enabled = true;
  double probability = 0.5;
  bool scale = true;
  double scale_min = 0.9;
  double scale_max = 1.1;
  bool shift = true;
  double shift_max = 0.0625;  // fraction of the image side
  bool rotate = true;
  double rotate_max_deg = 45.0;
  bool hflip = true;
  bool vflip = true;
  bool noise = true;
  double noise_sigma_max = 0.05;
  bool color = true;
  double color_min = 0.8;
  double color_max = 1.2;

  bool operator==(const AugmentConfig&) const = default;
};

struct TrainConfig {
  Paradigm paradigm = Paradigm::kMultiDomainAdaptive;
  int64_t epochs = 200;
  int64_t batch_size = 16;
  double base_lr = 1e-4;
  int64_t lr_step = 50;
  double lr_gamma = 0.5;
  double weight_decay = 0.01;
  uint64_t seed = 42;
  AugmentConfig augment;
  // Fraction of each training split held out for best-snapshot selection.
  double val_fraction = 0.1;
  int64_t fold = 0;
  // Hard cap on optimizer steps per model; 0 means epochs alone decide.
  int64_t max_steps = 0;

  /// Checks the invariants that only depend on the train config itself
  /// plus the balanced-sampling divisibility against `model`.
  void validate(const ModelConfig& model) const;

  bool operator==(const TrainConfig&) const = default;
};

struct ExperimentConfig {
  ModelConfig model;
  TrainConfig train;

  bool operator==(const ExperimentConfig&) const = default;
};

/// Parses the flat `key=value` format (`#` starts a comment). Keys that are
/// absent keep their defaults. Throws ParseError on malformed lines or
/// unknown keys and ValidationError when the result violates an invariant.
ExperimentConfig parse_config(std::string_view text);
/// Throws DataError when the file cannot be read.
ExperimentConfig load_config(const std::filesystem::path& path);

/// Resolves the `--config` argument: "default" (or empty with no
/// MDVIT_CONFIG set) yields the built-in defaults.
ExperimentConfig resolve_config(const std::string& path_or_default);

/// Emits every key with its current value, in a stable order.
std::string serialize_config(const ExperimentConfig& config);

/// Number of patch tokens produced by encoder block `block` (1..4) for an
/// H x W image: (H / 2^(block+1)) * (W / 2^(block+1)).
int64_t token_count(int block, int64_t height, int64_t width);

}  // namespace mdvit
