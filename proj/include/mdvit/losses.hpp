#pragma once

#include <torch/torch.h>

#include <vector>

namespace mdvit {

/// Additive smoothing in the Dice ratio.
inline constexpr double kDiceSmooth = 1.0;

/// Soft Dice loss 1 - (2 sum(p t) + eps) / (sum p + sum t + eps), computed
/// per batch item over all of its elements and averaged over the batch.
/// Both inputs must lie in [0, 1] (ContractError otherwise).
torch::Tensor dice_loss(const torch::Tensor& pred, const torch::Tensor& target);

/// Mean binary cross entropy from logits, in the overflow-free form
/// max(x, 0) - x t + log(1 + exp(-|x|)).
torch::Tensor bce_loss(const torch::Tensor& logits, const torch::Tensor& target);

/// dice_loss(sigmoid(logits), target) + bce_loss(logits, target).
torch::Tensor seg_loss(const torch::Tensor& logits, const torch::Tensor& target);

/// Symmetric Dice between two probability maps; gradients reach both.
torch::Tensor mkd_loss(const torch::Tensor& universal_probs, const torch::Tensor& peer_probs);

/// Differentiable terms of the multi-domain objective.
struct LossTerms {
  torch::Tensor seg_universal;
  std::vector<torch::Tensor> seg_peer;  // one per domain; zero when the slice is empty
  std::vector<torch::Tensor> mkd;       // one per domain; zero when the slice is empty
  torch::Tensor peer_sum;               // sum of seg_peer
  torch::Tensor mkd_sum;                // sum of mkd
  torch::Tensor total;                  // seg_universal + alpha*peer_sum + beta*mkd_sum
};

/// Scalar snapshot of LossTerms.
struct LossBundle {
  double l_seg_u = 0.0;
  std::vector<double> l_seg_a;
  std::vector<double> l_mkd;
  double total = 0.0;
};

/// Builds the objective for one batch.
///
/// `peer_logits[m]` holds peer m's logits for exactly the samples whose
/// domain is m, in batch order (undefined or empty when there are none).
/// Empty slices contribute zero without gradient.
LossTerms total_loss(const torch::Tensor& target, const torch::Tensor& universal_logits,
                     const std::vector<torch::Tensor>& peer_logits,
                     const torch::Tensor& domains, double alpha, double beta);

LossBundle to_bundle(const LossTerms& terms);

}  // namespace mdvit
