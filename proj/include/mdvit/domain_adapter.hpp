#pragma once

#include <torch/torch.h>

#include <cstdint>

namespace mdvit {

/// A domain index in [0, M) together with M.
struct DomainLabel {
  int64_t index = 0;
  int64_t num_domains = 1;

  /// Throws ContractError unless 0 <= index < num_domains.
  DomainLabel(int64_t index, int64_t num_domains);

  /// Exactly one 1.0 at `index`, zeros elsewhere; shape (M).
  torch::Tensor one_hot(torch::ScalarType dtype = torch::kFloat32) const;
};

/// One-hot rows for a batch of domain indices: (B) int64 -> (B, M).
torch::Tensor one_hot_labels(const torch::Tensor& indices, int64_t num_domains,
                             torch::ScalarType dtype = torch::kFloat32);

/// Whether the adapter's calibration weights take part in differentiation.
/// kDetach evaluates the same weights as constants.
enum class AdapterGradient { kFlow, kDetach };

/// Domain-conditioned head weighting inside one factorized attention layer.
///
/// The one-hot label m goes through a linear map with ReLU to the
/// domain-aware vector d (width K/r). Each head h owns a K x K/r matrix W^h;
/// the per-head logits W^h d are normalized with a softmax across heads
/// independently for every channel k, so the weights of one channel sum to
/// one over the heads. The attention output of head h is then scaled
/// channel-wise by its weights before the heads are concatenated.
class DomainAdapterImpl : public torch::nn::Module {
 public:
  DomainAdapterImpl(int64_t num_domains, int64_t num_heads, int64_t head_dim, int64_t reduction);

  /// (B, M) one-hot -> (B, K/r), relu(E m + b).
  torch::Tensor embed_domain(const torch::Tensor& one_hot) const;
  /// (B, K/r) -> (B, H, K) head attention.
  torch::Tensor head_attention(const torch::Tensor& d) const;
  /// Both steps: (B, M) one-hot -> (B, H, K).
  torch::Tensor forward(const torch::Tensor& one_hot) const;

  int64_t num_domains() const { return num_domains_; }
  int64_t num_heads() const { return num_heads_; }
  int64_t head_dim() const { return head_dim_; }
  int64_t reduced_dim() const { return reduced_dim_; }

  torch::nn::Linear embed{nullptr};
  torch::Tensor head_maps;  // (H, K, K/r), no bias

 private:
  int64_t num_domains_;
  int64_t num_heads_;
  int64_t head_dim_;
  int64_t reduced_dim_;
};
TORCH_MODULE(DomainAdapter);

/// Softmax across heads of the per-head logits W^h d.
/// `d` is (B, K/r), `head_maps` is (H, K, K/r); returns (B, H, K).
torch::Tensor head_attention(const torch::Tensor& d, const torch::Tensor& head_maps);

/// Channel-wise information selection: heads_out (B, H, N, K) scaled by
/// attention (B, H, K) or (H, K). Throws ShapeError on mismatch.
torch::Tensor calibrate(const torch::Tensor& heads_out, const torch::Tensor& attention);

/// Closed-form trainable parameter count of one adapter:
/// M*(K/r) + K/r for the embedding and H*K*(K/r) for the head maps.
int64_t adapter_parameter_count(int64_t num_domains, int64_t num_heads, int64_t head_dim,
                                int64_t reduction);

}  // namespace mdvit
