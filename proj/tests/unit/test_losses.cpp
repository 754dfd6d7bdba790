#include <gtest/gtest.h>

#include <cmath>

#include "mdvit/errors.hpp"
#include "mdvit/losses.hpp"
#include "test_util.hpp"

using namespace mdvit;
using mdvit::test_util::central_difference;
using mdvit::test_util::relative_error;

namespace {

const auto kF64 = torch::TensorOptions().dtype(torch::kFloat64);

// 1 - (2 sum(p t) + 1) / (sum p + sum t + 1) for one item, by explicit loops.
double dice_item_loops(const torch::Tensor& p, const torch::Tensor& t) {
  const auto pf = p.contiguous().view({-1});
  const auto tf = t.contiguous().view({-1});
  double inter = 0.0, sp = 0.0, st = 0.0;
  for (int64_t i = 0; i < pf.numel(); ++i) {
    const double a = pf[i].item<double>();
    const double b = tf[i].item<double>();
    inter += a * b;
    sp += a;
    st += b;
  }
  return 1.0 - (2.0 * inter + 1.0) / (sp + st + 1.0);
}

double bce_loops(const torch::Tensor& x, const torch::Tensor& t) {
  const auto xf = x.contiguous().view({-1});
  const auto tf = t.contiguous().view({-1});
  double s = 0.0;
  for (int64_t i = 0; i < xf.numel(); ++i) {
    const double z = xf[i].item<double>();
    const double y = tf[i].item<double>();
    const double p = 1.0 / (1.0 + std::exp(-z));
    s += -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
  }
  return s / static_cast<double>(xf.numel());
}

// Analytic gradient of f w.r.t. `x` checked entry by entry against central
// differences.
void expect_gradient_matches(const std::function<torch::Tensor()>& f, torch::Tensor& x,
                             double tol = 1e-3) {
  x.mutable_grad() = torch::Tensor();
  f().backward();
  const auto analytic = x.grad().clone();
  const auto scalar = [&] { return f().item<double>(); };
  for (int64_t i = 0; i < x.numel(); ++i) {
    const double numeric = central_difference(scalar, x, i, 1e-6);
    EXPECT_LT(relative_error(analytic.view({-1})[i].item<double>(), numeric), tol) << "entry " << i;
  }
}

}  // namespace

TEST(DiceLoss, ClosedForms) {
  EXPECT_DOUBLE_EQ(dice_loss(torch::ones({1, 1, 2, 2}, kF64), torch::ones({1, 1, 2, 2}, kF64)).item<double>(), 0.0);
  EXPECT_NEAR(dice_loss(torch::ones({1, 1, 2, 2}, kF64), torch::zeros({1, 1, 2, 2}, kF64)).item<double>(), 0.8,
              1e-15);
  // Both empty: the smoothing term makes the ratio exactly one.
  EXPECT_DOUBLE_EQ(dice_loss(torch::zeros({1, 1, 2, 2}, kF64), torch::zeros({1, 1, 2, 2}, kF64)).item<double>(), 0.0);
}

TEST(DiceLoss, SelfOverlapClosedForm) {
  torch::manual_seed(1);
  const auto p = torch::rand({1, 1, 3, 3}, kF64).clamp_min(0.05);
  const double sp = p.sum().item<double>();
  const double sp2 = p.square().sum().item<double>();
  const double expected = 1.0 - (2.0 * sp2 + 1.0) / (2.0 * sp + 1.0);
  EXPECT_NEAR(dice_loss(p, p).item<double>(), expected, 1e-14);
  EXPECT_NEAR(dice_loss(p, p).item<double>(), dice_item_loops(p, p), 1e-14);
  EXPECT_GT(dice_loss(p, p).item<double>(), 0.0);
}

TEST(DiceLoss, PerItemThenBatchMean) {
  torch::manual_seed(2);
  const auto p = torch::rand({3, 1, 4, 4}, kF64);
  const auto t = (torch::rand({3, 1, 4, 4}, kF64) > 0.5).to(torch::kFloat64);
  double mean = 0.0;
  for (int64_t b = 0; b < 3; ++b) mean += dice_item_loops(p[b], t[b]) / 3.0;
  EXPECT_NEAR(dice_loss(p, t).item<double>(), mean, 1e-14);
}

TEST(DiceLoss, Contract) {
  EXPECT_THROW(dice_loss(torch::full({1, 1, 2, 2}, 1.5), torch::ones({1, 1, 2, 2})), ContractError);
  EXPECT_THROW(dice_loss(torch::full({1, 1, 2, 2}, -0.1), torch::ones({1, 1, 2, 2})), ContractError);
  EXPECT_THROW(dice_loss(torch::ones({1, 1, 2, 2}), torch::ones({1, 1, 2, 3})), ShapeError);
}

TEST(BceLoss, ClosedForms) {
  EXPECT_NEAR(bce_loss(torch::zeros({1, 1, 2, 2}, kF64), torch::ones({1, 1, 2, 2}, kF64)).item<double>(),
              std::log(2.0), 1e-15);
  EXPECT_LE(bce_loss(torch::full({1, 1, 2, 2}, 20.0, kF64), torch::ones({1, 1, 2, 2}, kF64)).item<double>(), 1e-8);
}

TEST(BceLoss, LoopOracle) {
  torch::manual_seed(3);
  const auto x = torch::randn({1, 1, 2, 2}, kF64) * 3.0;
  const auto t = torch::tensor({1.0, 0.0, 0.0, 1.0}, kF64).view({1, 1, 2, 2});
  EXPECT_NEAR(bce_loss(x, t).item<double>(), bce_loops(x, t), 1e-9);
}

TEST(BceLoss, ExtremeLogitsStayFinite) {
  const auto x = torch::tensor({1000.0, -1000.0}, kF64);
  const auto t = torch::tensor({0.0, 1.0}, kF64);
  const auto l = bce_loss(x, t).item<double>();
  EXPECT_TRUE(std::isfinite(l));
  EXPECT_NEAR(l, 1000.0, 1e-9);
}

TEST(SegLoss, PerfectPredictionVanishes) {
  const auto t = torch::tensor({1.0, 0.0, 1.0, 0.0}, kF64).view({1, 1, 2, 2});
  const auto logits = t * 40.0 - 20.0;
  EXPECT_LT(seg_loss(logits, t).item<double>(), 1e-6);
}

TEST(SegLoss, ZeroLogitsHalfTarget) {
  const auto t = torch::tensor({1.0, 1.0, 0.0, 0.0}, kF64).view({1, 1, 2, 2});
  const auto logits = torch::zeros({1, 1, 2, 2}, kF64);
  // bce = ln 2; dice = 1 - (2 * 1 + 1) / (2 + 2 + 1) = 0.4.
  EXPECT_NEAR(seg_loss(logits, t).item<double>(), std::log(2.0) + 0.4, 1e-14);
}

TEST(SegLoss, IsDicePlusBce) {
  torch::manual_seed(4);
  const auto x = torch::randn({2, 1, 4, 4}, kF64);
  const auto t = (torch::rand({2, 1, 4, 4}, kF64) > 0.5).to(torch::kFloat64);
  EXPECT_EQ(seg_loss(x, t).item<double>(),
            (dice_loss(torch::sigmoid(x), t) + bce_loss(x, t)).item<double>());
}

TEST(MkdLoss, Identities) {
  torch::manual_seed(5);
  const auto a = torch::rand({2, 1, 3, 3}, kF64);
  const auto b = torch::rand({2, 1, 3, 3}, kF64);
  EXPECT_EQ(mkd_loss(a, b).item<double>(), mkd_loss(b, a).item<double>());
  const auto bin = (a > 0.5).to(torch::kFloat64);
  EXPECT_EQ(mkd_loss(bin, bin).item<double>(), 0.0);
  EXPECT_NEAR(mkd_loss(torch::ones({1, 1, 2, 2}, kF64), torch::zeros({1, 1, 2, 2}, kF64)).item<double>(), 0.8,
              1e-15);
}

TEST(MkdLoss, GradientReachesBothSides) {
  auto a = torch::rand({1, 1, 2, 2}, kF64).requires_grad_();
  auto b = torch::rand({1, 1, 2, 2}, kF64).requires_grad_();
  mkd_loss(a, b).backward();
  EXPECT_GT(a.grad().abs().sum().item<double>(), 0.0);
  EXPECT_GT(b.grad().abs().sum().item<double>(), 0.0);
}

TEST(TotalLoss, WeightsZeroLeaveUniversalTerm) {
  torch::manual_seed(6);
  const auto t = (torch::rand({4, 1, 4, 4}, kF64) > 0.5).to(torch::kFloat64);
  const auto u = torch::randn({4, 1, 4, 4}, kF64);
  const auto domains = torch::tensor({0, 1, 0, 1}, torch::kLong);
  const std::vector<torch::Tensor> peers{torch::randn({2, 1, 4, 4}, kF64), torch::randn({2, 1, 4, 4}, kF64)};
  const auto terms = total_loss(t, u, peers, domains, 0.0, 0.0);
  EXPECT_EQ(terms.total.item<double>(), seg_loss(u, t).item<double>());
}

TEST(TotalLoss, RecomputedFromComponents) {
  torch::manual_seed(7);
  const auto t = (torch::rand({4, 1, 4, 4}, kF64) > 0.5).to(torch::kFloat64);
  const auto u = torch::randn({4, 1, 4, 4}, kF64);
  const auto domains = torch::tensor({1, 0, 1, 0}, torch::kLong);
  const std::vector<torch::Tensor> peers{torch::randn({2, 1, 4, 4}, kF64), torch::randn({2, 1, 4, 4}, kF64)};
  const double alpha = 0.3, beta = 0.7;
  const auto terms = total_loss(t, u, peers, domains, alpha, beta);

  // Peer m sees the rows of domain m in batch order.
  const auto rows0 = torch::tensor({1, 3}, torch::kLong);
  const auto rows1 = torch::tensor({0, 2}, torch::kLong);
  const double a0 = seg_loss(peers[0], t.index_select(0, rows0)).item<double>();
  const double a1 = seg_loss(peers[1], t.index_select(0, rows1)).item<double>();
  const auto up = torch::sigmoid(u);
  const double k0 = mkd_loss(up.index_select(0, rows0), torch::sigmoid(peers[0])).item<double>();
  const double k1 = mkd_loss(up.index_select(0, rows1), torch::sigmoid(peers[1])).item<double>();
  const double seg_u = seg_loss(u, t).item<double>();

  EXPECT_NEAR(terms.seg_peer[0].item<double>(), a0, 1e-15);
  EXPECT_NEAR(terms.seg_peer[1].item<double>(), a1, 1e-15);
  EXPECT_NEAR(terms.mkd[0].item<double>(), k0, 1e-15);
  EXPECT_NEAR(terms.mkd[1].item<double>(), k1, 1e-15);
  EXPECT_NEAR(terms.total.item<double>(), seg_u + alpha * (a0 + a1) + beta * (k0 + k1), 1e-14);

  const auto bundle = to_bundle(terms);
  double sum = bundle.l_seg_u;
  for (const auto v : bundle.l_seg_a) sum += alpha * v;
  for (const auto v : bundle.l_mkd) sum += beta * v;
  EXPECT_NEAR(bundle.total, sum, 1e-14);
  for (const auto v : bundle.l_seg_a) EXPECT_GE(v, 0.0);
  for (const auto v : bundle.l_mkd) EXPECT_GE(v, 0.0);
}

TEST(TotalLoss, AllOnesComponents) {
  // alpha = beta = 0.5, every component 1, M = 4: 1 + 0.5 * 4 + 0.5 * 4.
  LossBundle b;
  b.l_seg_u = 1.0;
  b.l_seg_a = {1, 1, 1, 1};
  b.l_mkd = {1, 1, 1, 1};
  double total = b.l_seg_u;
  for (const auto v : b.l_seg_a) total += 0.5 * v;
  for (const auto v : b.l_mkd) total += 0.5 * v;
  EXPECT_EQ(total, 5.0);
}

TEST(TotalLoss, SingleSampleSingleDomain) {
  const auto t = torch::tensor({1.0, 0.0, 0.0, 1.0}, kF64).view({1, 1, 2, 2});
  const auto u = torch::tensor({0.5, -1.0, 2.0, 0.0}, kF64).view({1, 1, 2, 2});
  const auto p = torch::tensor({-0.5, 1.0, 0.0, 3.0}, kF64).view({1, 1, 2, 2});
  const auto terms = total_loss(t, u, {p}, torch::tensor({0}, torch::kLong), 0.5, 0.5);
  const double seg_u = dice_item_loops(torch::sigmoid(u), t) + bce_loops(u, t);
  const double seg_a = dice_item_loops(torch::sigmoid(p), t) + bce_loops(p, t);
  const double mkd = dice_item_loops(torch::sigmoid(u), torch::sigmoid(p));
  EXPECT_NEAR(terms.seg_universal.item<double>(), seg_u, 1e-14);
  EXPECT_NEAR(terms.seg_peer[0].item<double>(), seg_a, 1e-14);
  EXPECT_NEAR(terms.mkd[0].item<double>(), mkd, 1e-14);
  EXPECT_NEAR(terms.total.item<double>(), seg_u + 0.5 * seg_a + 0.5 * mkd, 1e-14);
}

TEST(TotalLoss, AbsentDomainContributesZero) {
  const auto t = torch::ones({2, 1, 2, 2}, kF64);
  const auto u = torch::zeros({2, 1, 2, 2}, kF64);
  const auto terms = total_loss(t, u, {torch::zeros({2, 1, 2, 2}, kF64), torch::Tensor()},
                                torch::tensor({0, 0}, torch::kLong), 1.0, 1.0);
  EXPECT_EQ(terms.seg_peer[1].item<double>(), 0.0);
  EXPECT_EQ(terms.mkd[1].item<double>(), 0.0);
  EXPECT_THROW(total_loss(t, u, {torch::zeros({2, 1, 2, 2}, kF64), torch::zeros({1, 1, 2, 2}, kF64)},
                          torch::tensor({0, 0}, torch::kLong), 1.0, 1.0),
               ContractError);
}

TEST(Gradients, DiceMatchesFiniteDifferences) {
  torch::manual_seed(10);
  auto p = (torch::rand({1, 1, 4, 4}, kF64) * 0.8 + 0.1).requires_grad_();
  const auto t = (torch::rand({1, 1, 4, 4}, kF64) > 0.5).to(torch::kFloat64);
  expect_gradient_matches([&] { return dice_loss(p, t); }, p);
}

TEST(Gradients, BceMatchesFiniteDifferences) {
  torch::manual_seed(11);
  auto x = torch::randn({1, 1, 4, 4}, kF64).requires_grad_();
  const auto t = (torch::rand({1, 1, 4, 4}, kF64) > 0.5).to(torch::kFloat64);
  expect_gradient_matches([&] { return bce_loss(x, t); }, x);
}

TEST(Gradients, MkdMatchesFiniteDifferences) {
  torch::manual_seed(12);
  auto a = (torch::rand({1, 1, 4, 4}, kF64) * 0.8 + 0.1).requires_grad_();
  auto b = (torch::rand({1, 1, 4, 4}, kF64) * 0.8 + 0.1).requires_grad_();
  expect_gradient_matches([&] { return mkd_loss(a, b); }, a);
  expect_gradient_matches([&] { return mkd_loss(a, b); }, b);
}

TEST(Gradients, TotalMatchesFiniteDifferences) {
  torch::manual_seed(13);
  const auto t = (torch::rand({2, 1, 4, 4}, kF64) > 0.5).to(torch::kFloat64);
  auto u = torch::randn({2, 1, 4, 4}, kF64).requires_grad_();
  auto p0 = torch::randn({1, 1, 4, 4}, kF64).requires_grad_();
  auto p1 = torch::randn({1, 1, 4, 4}, kF64).requires_grad_();
  const auto domains = torch::tensor({1, 0}, torch::kLong);
  const auto f = [&] { return total_loss(t, u, {p0, p1}, domains, 0.5, 0.5).total; };
  expect_gradient_matches(f, u);
  expect_gradient_matches(f, p0);
  expect_gradient_matches(f, p1);
}
