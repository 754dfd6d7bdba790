#include "mdvit/aux_peers.hpp"

#include <string>

#include "mdvit/errors.hpp"

namespace mdvit {

AuxiliaryPeerImpl::AuxiliaryPeerImpl(const ModelConfig& config)
    : channels_(config.encoder_channels),
      fusion_in_(4 * config.peer_hidden + config.encoder_channels[0]) {
  level_proj = register_module("level_proj", torch::nn::ModuleList());
  for (const auto c : channels_) level_proj->push_back(torch::nn::Linear(c, config.peer_hidden));
  fuse = register_module("fuse", torch::nn::Linear(fusion_in_, config.peer_hidden));
  out = register_module("out", torch::nn::Linear(config.peer_hidden, 1));
}

torch::Tensor AuxiliaryPeerImpl::forward(const FeaturePyramid& pyramid, int64_t out_height,
                                         int64_t out_width) {
  const auto& final_feature = pyramid.final_feature;
  if (final_feature.channels() != channels_[0]) {
    throw ShapeError("peer: final feature has " + std::to_string(final_feature.channels()) +
                     " channels, expected " + std::to_string(channels_[0]));
  }
  const auto h4 = final_feature.height;
  const auto w4 = final_feature.width;
  std::vector<torch::Tensor> parts;
  parts.reserve(5);
  for (size_t i = 0; i < 4; ++i) {
    const auto& level = pyramid.encoder_features[i];
    if (level.channels() != channels_[i]) {
      throw ShapeError("peer: encoder level " + std::to_string(i + 1) + " has " +
                       std::to_string(level.channels()) + " channels, expected " +
                       std::to_string(channels_[i]));
    }
    auto projected = TokenMap{level_proj[i]->as<torch::nn::Linear>()->forward(level.tokens),
                              level.height, level.width};
    parts.push_back(resize_bilinear(projected.spatial(), h4, w4));
  }
  parts.push_back(final_feature.spatial());
  auto fused = TokenMap::from_spatial(torch::cat(parts, 1));
  auto hidden = torch::gelu(fuse->forward(fused.tokens));
  auto logits = TokenMap{out->forward(hidden), h4, w4}.spatial();
  return resize_bilinear(logits, out_height, out_width);
}

int64_t AuxiliaryPeerImpl::parameter_count() const {
  int64_t n = 0;
  for (const auto& p : parameters()) n += p.numel();
  return n;
}

std::vector<AuxiliaryPeer> build_peers(const ModelConfig& config) {
  std::vector<AuxiliaryPeer> peers;
  peers.reserve(static_cast<size_t>(config.num_domains));
  for (int64_t m = 0; m < config.num_domains; ++m) peers.emplace_back(config);
  return peers;
}

}  // namespace mdvit
