#include "mdvit/model.hpp"

namespace mdvit {

Model::Model(const ModelConfig& cfg, uint64_t seed) : config(cfg) {
  config.validate();
  torch::manual_seed(seed);
  universal = UniversalNetwork(config);
  if (config.mkd_enabled) peers = build_peers(config);
}

int64_t Model::count_parameters(ParameterRole role) const {
  switch (role) {
    case ParameterRole::kUniversal:
    case ParameterRole::kInference:
      return universal->parameter_count();
    case ParameterRole::kPeer:
      return peers.empty() ? AuxiliaryPeer(config)->parameter_count()
                           : peers.front()->parameter_count();
    case ParameterRole::kTrainingTotal: {
      auto n = universal->parameter_count();
      for (const auto& p : peers) n += p->parameter_count();
      return n;
    }
  }
  return 0;
}

std::vector<torch::Tensor> Model::parameters() const {
  auto out = universal->parameters();
  const auto peer = peer_parameters();
  out.insert(out.end(), peer.begin(), peer.end());
  return out;
}

std::vector<torch::Tensor> Model::peer_parameters() const {
  std::vector<torch::Tensor> out;
  for (const auto& p : peers) {
    const auto params = p->parameters();
    out.insert(out.end(), params.begin(), params.end());
  }
  return out;
}

void Model::set_training(bool on) {
  universal->train(on);
  for (auto& p : peers) p->train(on);
}

void Model::to(torch::ScalarType dtype) {
  universal->to(dtype);
  for (auto& p : peers) p->to(dtype);
}

}  // namespace mdvit
