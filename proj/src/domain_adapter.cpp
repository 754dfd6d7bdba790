#include "mdvit/domain_adapter.hpp"

#include <string>

#include "mdvit/errors.hpp"

namespace mdvit {

DomainLabel::DomainLabel(int64_t index_, int64_t num_domains_)
    : index(index_), num_domains(num_domains_) {
  if (num_domains < 1 || index < 0 || index >= num_domains) {
    throw ContractError("domain index " + std::to_string(index) + " outside [0, " +
                        std::to_string(num_domains) + ")");
  }
}

torch::Tensor DomainLabel::one_hot(torch::ScalarType dtype) const {
  auto m = torch::zeros({num_domains}, torch::TensorOptions().dtype(dtype));
  m[index] = 1.0;
  return m;
}

torch::Tensor one_hot_labels(const torch::Tensor& indices, int64_t num_domains,
                             torch::ScalarType dtype) {
  if (indices.dim() != 1) throw ShapeError("domain indices must be a 1-D tensor");
  if (indices.numel() > 0) {
    const auto lo = indices.min().item<int64_t>();
    const auto hi = indices.max().item<int64_t>();
    if (lo < 0 || hi >= num_domains) {
      throw ContractError("domain label outside [0, " + std::to_string(num_domains) + ")");
    }
  }
  return torch::one_hot(indices.to(torch::kInt64), num_domains).to(dtype);
}

DomainAdapterImpl::DomainAdapterImpl(int64_t num_domains, int64_t num_heads, int64_t head_dim,
                                     int64_t reduction)
    : num_domains_(num_domains),
      num_heads_(num_heads),
      head_dim_(head_dim),
      reduced_dim_(reduction > 0 ? head_dim / reduction : 0) {
  if (num_domains < 1 || num_heads < 1 || reduced_dim_ < 1) {
    throw ShapeError("domain adapter needs M >= 1, H >= 1 and floor(K/r) >= 1 (K=" +
                     std::to_string(head_dim) + ", r=" + std::to_string(reduction) + ")");
  }
  embed = register_module("embed", torch::nn::Linear(num_domains, reduced_dim_));
  head_maps = register_parameter("head_maps", torch::empty({num_heads, head_dim, reduced_dim_}));

  // Small weights start every channel near the uniform 1/H split.
  torch::NoGradGuard no_grad;
  torch::nn::init::normal_(embed->weight, 0.0, 0.02);
  torch::nn::init::zeros_(embed->bias);
  torch::nn::init::normal_(head_maps, 0.0, 0.02);
}

torch::Tensor DomainAdapterImpl::embed_domain(const torch::Tensor& one_hot) const {
  if (one_hot.dim() != 2 || one_hot.size(1) != num_domains_) {
    throw ContractError("domain one-hot must be (B, " + std::to_string(num_domains_) + ")");
  }
  return torch::relu(torch::nn::functional::linear(one_hot, embed->weight, embed->bias));
}

torch::Tensor DomainAdapterImpl::head_attention(const torch::Tensor& d) const {
  return mdvit::head_attention(d, head_maps);
}

torch::Tensor DomainAdapterImpl::forward(const torch::Tensor& one_hot) const {
  return head_attention(embed_domain(one_hot));
}

torch::Tensor head_attention(const torch::Tensor& d, const torch::Tensor& head_maps) {
  if (d.dim() != 2 || head_maps.dim() != 3 || d.size(1) != head_maps.size(2)) {
    throw ShapeError("head_attention: d must be (B, K/r) and head maps (H, K, K/r)");
  }
  auto logits = torch::einsum("hkj,bj->bhk", {head_maps, d});
  return torch::softmax(logits, /*dim=*/1);
}

torch::Tensor calibrate(const torch::Tensor& heads_out, const torch::Tensor& attention) {
  if (heads_out.dim() != 4) throw ShapeError("calibrate: heads_out must be (B, H, N, K)");
  const auto heads = heads_out.size(1);
  const auto k = heads_out.size(3);
  if (attention.dim() == 2) {
    if (attention.size(0) != heads || attention.size(1) != k) {
      throw ShapeError("calibrate: attention must be (H, K)");
    }
    return heads_out * attention.unsqueeze(1);
  }
  if (attention.dim() != 3 || attention.size(0) != heads_out.size(0) ||
      attention.size(1) != heads || attention.size(2) != k) {
    throw ShapeError("calibrate: attention must be (B, H, K) matching heads_out");
  }
  return heads_out * attention.unsqueeze(2);
}

int64_t adapter_parameter_count(int64_t num_domains, int64_t num_heads, int64_t head_dim,
                                int64_t reduction) {
  const auto reduced = head_dim / reduction;
  return num_domains * reduced + reduced + num_heads * head_dim * reduced;
}

}  // namespace mdvit
