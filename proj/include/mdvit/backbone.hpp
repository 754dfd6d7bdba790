#pragma once

#include <torch/torch.h>

#include <array>
#include <cstdint>
#include <vector>

#include "mdvit/config.hpp"
#include "mdvit/domain_adapter.hpp"

namespace mdvit {

/// Tokens (B, N, C) laid out row-major over a (height, width) grid.
struct TokenMap {
  torch::Tensor tokens;
  int64_t height = 0;
  int64_t width = 0;

  int64_t channels() const { return tokens.size(2); }
  /// (B, C, height, width) view of the tokens.
  torch::Tensor spatial() const;
  static TokenMap from_spatial(const torch::Tensor& map);
  /// Keeps only the listed batch rows.
  TokenMap select(const torch::Tensor& batch_indices) const;
};

/// Encoder outputs of blocks 1-4 plus the last decoding block's output.
struct FeaturePyramid {
  std::array<TokenMap, 4> encoder_features;
  TokenMap final_feature;

  FeaturePyramid select(const torch::Tensor& batch_indices) const;
};

/// Two stride-2 3x3 convolutions (widths C1/2 and C1), each followed by
/// group normalization and GELU. Maps (B, 3, H, W) to (B, C1, H/4, W/4).
class StemImpl : public torch::nn::Module {
 public:
  explicit StemImpl(int64_t out_channels);
  TokenMap forward(const torch::Tensor& image);

  torch::nn::Sequential layers{nullptr};
};
TORCH_MODULE(Stem);

/// 3x3 convolutional patch embedding followed by LayerNorm over channels.
class PatchEmbedImpl : public torch::nn::Module {
 public:
  PatchEmbedImpl(int64_t in_channels, int64_t out_channels, bool downsample);
  TokenMap forward(const torch::Tensor& spatial_map);
  TokenMap forward(const TokenMap& x) { return forward(x.spatial()); }

  torch::nn::Conv2d proj{nullptr};
  torch::nn::LayerNorm norm{nullptr};
};
TORCH_MODULE(PatchEmbed);

/// Linear-complexity attention over per-head tensors (B, heads, N, K):
/// out = (q / sqrt(K)) * (softmax_over_tokens(k)^T v).
/// Throws ContractError on non-finite inputs.
torch::Tensor factorized_attention(const torch::Tensor& q, const torch::Tensor& k,
                                   const torch::Tensor& v);

struct AttentionOptions {
  int64_t channels = 0;
  int64_t num_heads = 1;
  bool domain_adapter = false;
  int64_t num_domains = 1;
  int64_t da_reduction = 2;
};

/// Multi-head factorized self-attention with an optional domain adapter
/// applied to the per-head outputs before the output projection.
class FactorizedAttentionImpl : public torch::nn::Module {
 public:
  explicit FactorizedAttentionImpl(const AttentionOptions& options);
  /// x: (B, N, C); domain_one_hot: (B, M), required iff the adapter exists.
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& domain_one_hot,
                        AdapterGradient adapter_gradient = AdapterGradient::kFlow);

  bool has_adapter() const { return !adapter.is_empty(); }

  torch::nn::Linear qkv{nullptr};
  torch::nn::Linear proj{nullptr};
  DomainAdapter adapter{nullptr};

 private:
  int64_t num_heads_;
  int64_t head_dim_;
};
TORCH_MODULE(FactorizedAttention);

/// Pre-norm layer: depthwise-conv position encoding (residual), factorized
/// attention (residual), MLP with 4x expansion (residual).
class TransformerLayerImpl : public torch::nn::Module {
 public:
  explicit TransformerLayerImpl(const AttentionOptions& options);
  TokenMap forward(const TokenMap& x, const torch::Tensor& domain_one_hot,
                   AdapterGradient adapter_gradient = AdapterGradient::kFlow);

  torch::nn::Conv2d pos_embed{nullptr};
  torch::nn::LayerNorm norm1{nullptr};
  FactorizedAttention attn{nullptr};
  torch::nn::LayerNorm norm2{nullptr};
  torch::nn::Linear fc1{nullptr};
  torch::nn::Linear fc2{nullptr};
};
TORCH_MODULE(TransformerLayer);

/// Patch embedding followed by `num_layers` transformer layers.
class TransformerBlockImpl : public torch::nn::Module {
 public:
  TransformerBlockImpl(int64_t in_channels, bool downsample, int64_t num_layers,
                       const AttentionOptions& options);
  TokenMap forward(const torch::Tensor& spatial_map, const torch::Tensor& domain_one_hot,
                   AdapterGradient adapter_gradient = AdapterGradient::kFlow);

  PatchEmbed patch_embed{nullptr};
  torch::nn::ModuleList layers{nullptr};
};
TORCH_MODULE(TransformerBlock);

/// Two 3x3 convolutions (C -> hidden -> C) with group norm and GELU.
class BridgeImpl : public torch::nn::Module {
 public:
  BridgeImpl(int64_t channels, int64_t hidden);
  TokenMap forward(const TokenMap& x);

  torch::nn::Sequential layers{nullptr};
};
TORCH_MODULE(Bridge);

struct UniversalOutput {
  torch::Tensor logits;  // (B, 1, H, W), raw
  FeaturePyramid pyramid;
};

/// The U-shaped hierarchical transformer shared by all domains.
///
/// stem -> encoding blocks 1-4 -> bridge -> decoding blocks 5-8 -> 1x1 head
/// -> 4x bilinear upsample. Decoding block 5 fuses the bridge output with
/// the block-4 skip at H/32; blocks 6-8 first upsample 2x and then fuse the
/// mirrored skip, so decoder resolutions run H/32, H/16, H/8, H/4 with
/// channels C3, C2, C1, C1. With `da_enabled` every attention layer carries
/// its own domain adapter and `forward` requires per-sample domain indices.
class UniversalNetworkImpl : public torch::nn::Module {
 public:
  explicit UniversalNetworkImpl(const ModelConfig& config);

  /// image: (B, 3, H, W); domains: (B) int64 indices, or undefined when the
  /// adapters are disabled.
  UniversalOutput forward(const torch::Tensor& image, const torch::Tensor& domains = {},
                          AdapterGradient adapter_gradient = AdapterGradient::kFlow);

  const ModelConfig& config() const { return config_; }
  int64_t parameter_count() const;
  /// Parameters that belong to a domain adapter (embedding and head maps).
  std::vector<torch::Tensor> adapter_parameters() const;
  std::vector<torch::Tensor> non_adapter_parameters() const;

  Stem stem{nullptr};
  std::array<TransformerBlock, 4> encoder{nullptr, nullptr, nullptr, nullptr};
  Bridge bridge{nullptr};
  std::array<TransformerBlock, 4> decoder{nullptr, nullptr, nullptr, nullptr};
  torch::nn::Conv2d head{nullptr};

 private:
  ModelConfig config_;
};
TORCH_MODULE(UniversalNetwork);

/// True for parameter names registered under a domain adapter.
bool is_adapter_parameter_name(const std::string& name);

/// Bilinear resize of a (B, C, h, w) map, align_corners = false.
torch::Tensor resize_bilinear(const torch::Tensor& map, int64_t height, int64_t width);

}  // namespace mdvit
