#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <vector>

#include "mdvit/aux_peers.hpp"
#include "mdvit/backbone.hpp"
#include "mdvit/config.hpp"

namespace mdvit {

enum class ParameterRole {
  kUniversal,      // the universal network
  kPeer,           // one auxiliary peer
  kTrainingTotal,  // universal + all peers
  kInference,      // what ships: the universal network only
};

/// Universal network plus (when MKD is enabled) one auxiliary peer per domain.
struct Model {
  ModelConfig config;
  UniversalNetwork universal{nullptr};
  std::vector<AuxiliaryPeer> peers;

  /// Seeds the global torch generator with `seed`, then builds all modules.
  Model(const ModelConfig& config, uint64_t seed);

  int64_t count_parameters(ParameterRole role) const;
  std::vector<torch::Tensor> parameters() const;
  std::vector<torch::Tensor> peer_parameters() const;

  void set_training(bool on);
  void to(torch::ScalarType dtype);
};

}  // namespace mdvit
