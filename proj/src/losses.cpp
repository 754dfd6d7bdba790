#include "mdvit/losses.hpp"

#include <string>

#include "mdvit/errors.hpp"
#include "mdvit/log.hpp"

namespace mdvit {

namespace {

void require_unit_interval(const torch::Tensor& t, const char* what) {
  if (t.numel() == 0) return;
  const auto lo = t.min().item<double>();
  const auto hi = t.max().item<double>();
  if (!(lo >= 0.0 && hi <= 1.0)) {
    throw ContractError(std::string(what) + " must lie in [0, 1], found range [" +
                        std::to_string(lo) + ", " + std::to_string(hi) + "]");
  }
}

void require_same_shape(const torch::Tensor& a, const torch::Tensor& b, const char* op) {
  if (!a.sizes().equals(b.sizes())) {
    throw ShapeError(std::string(op) + ": input shapes differ");
  }
}

}  // namespace

torch::Tensor dice_loss(const torch::Tensor& pred, const torch::Tensor& target) {
  require_same_shape(pred, target, "dice_loss");
  require_unit_interval(pred, "dice_loss prediction");
  require_unit_interval(target, "dice_loss target");
  const auto b = pred.size(0);
  auto p = pred.reshape({b, -1});
  auto t = target.reshape({b, -1}).to(p.scalar_type());
  auto overlap = (p * t).sum(1);
  auto ratio = (2.0 * overlap + kDiceSmooth) / (p.sum(1) + t.sum(1) + kDiceSmooth);
  return (1.0 - ratio).mean();
}

torch::Tensor bce_loss(const torch::Tensor& logits, const torch::Tensor& target) {
  require_same_shape(logits, target, "bce_loss");
  auto t = target.to(logits.scalar_type());
  auto per_pixel = torch::clamp_min(logits, 0.0) - logits * t +
                   torch::log1p(torch::exp(-torch::abs(logits)));
  return per_pixel.mean();
}

torch::Tensor seg_loss(const torch::Tensor& logits, const torch::Tensor& target) {
  return dice_loss(torch::sigmoid(logits), target) + bce_loss(logits, target);
}

torch::Tensor mkd_loss(const torch::Tensor& universal_probs, const torch::Tensor& peer_probs) {
  return dice_loss(universal_probs, peer_probs);
}

LossTerms total_loss(const torch::Tensor& target, const torch::Tensor& universal_logits,
                     const std::vector<torch::Tensor>& peer_logits,
                     const torch::Tensor& domains, double alpha, double beta) {
  LossTerms terms;
  terms.seg_universal = seg_loss(universal_logits, target);
  const auto zero = torch::zeros({}, universal_logits.options());
  terms.peer_sum = zero;
  terms.mkd_sum = zero;

  const auto num_domains = static_cast<int64_t>(peer_logits.size());
  if (num_domains > 0 && (domains.dim() != 1 || domains.size(0) != target.size(0))) {
    throw ContractError("total_loss: need one domain index per sample");
  }
  auto universal_probs = torch::sigmoid(universal_logits);
  for (int64_t m = 0; m < num_domains; ++m) {
    const auto rows = (domains == m).nonzero().flatten();
    const auto& logits = peer_logits[static_cast<size_t>(m)];
    if (rows.numel() == 0) {
      if (logits.defined() && logits.numel() > 0) {
        throw ContractError("total_loss: peer " + std::to_string(m) +
                            " has logits but the batch has no samples of that domain");
      }
      log::debug("domain {} has no samples in this batch; its peer terms are zero", m);
      terms.seg_peer.push_back(zero);
      terms.mkd.push_back(zero);
      continue;
    }
    if (!logits.defined() || logits.size(0) != rows.numel()) {
      throw ContractError("total_loss: peer " + std::to_string(m) +
                          " logits do not match the domain slice size");
    }
    const auto slice_target = target.index_select(0, rows);
    const auto seg = seg_loss(logits, slice_target);
    const auto mkd = mkd_loss(universal_probs.index_select(0, rows), torch::sigmoid(logits));
    terms.seg_peer.push_back(seg);
    terms.mkd.push_back(mkd);
    terms.peer_sum = terms.peer_sum + seg;
    terms.mkd_sum = terms.mkd_sum + mkd;
  }
  terms.total = terms.seg_universal + alpha * terms.peer_sum + beta * terms.mkd_sum;
  return terms;
}

LossBundle to_bundle(const LossTerms& terms) {
  LossBundle b;
  b.l_seg_u = terms.seg_universal.item<double>();
  for (const auto& t : terms.seg_peer) b.l_seg_a.push_back(t.item<double>());
  for (const auto& t : terms.mkd) b.l_mkd.push_back(t.item<double>());
  b.total = terms.total.item<double>();
  return b;
}

}  // namespace mdvit
