#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <vector>

#include "mdvit/backbone.hpp"
#include "mdvit/config.hpp"

namespace mdvit {

/// Lightweight MLP decoder owned by one domain, used only while training.
///
/// Each encoder feature is projected token-wise to `peer_hidden` channels
/// and bilinearly resized to H/4 x W/4. The four maps are concatenated with
/// the universal network's final feature (C1 channels), fused by one linear
/// layer + GELU, projected to one logit and upsampled 4x.
class AuxiliaryPeerImpl : public torch::nn::Module {
 public:
  explicit AuxiliaryPeerImpl(const ModelConfig& config);

  /// Returns logits (B, 1, out_height, out_width).
  torch::Tensor forward(const FeaturePyramid& pyramid, int64_t out_height, int64_t out_width);

  int64_t fusion_in_channels() const { return fusion_in_; }
  int64_t parameter_count() const;

  torch::nn::ModuleList level_proj{nullptr};
  torch::nn::Linear fuse{nullptr};
  torch::nn::Linear out{nullptr};

 private:
  std::array<int64_t, 4> channels_;
  int64_t fusion_in_;
};
TORCH_MODULE(AuxiliaryPeer);

/// M independently initialized peers. Initialization draws from the
/// global torch generator; seed it first for reproducible weights.
std::vector<AuxiliaryPeer> build_peers(const ModelConfig& config);

}  // namespace mdvit
