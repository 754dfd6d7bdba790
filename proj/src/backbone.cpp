#include "mdvit/backbone.hpp"

#include <cmath>
#include <string>

#include "mdvit/errors.hpp"

namespace mdvit {

namespace F = torch::nn::functional;

namespace {

void append_conv_norm_act(torch::nn::Sequential& seq, int64_t in, int64_t out, int64_t stride) {
  seq->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 3).stride(stride).padding(1)));
  seq->push_back(torch::nn::GroupNorm(torch::nn::GroupNormOptions(1, out)));
  seq->push_back(torch::nn::GELU());
}

std::string shape_str(const torch::Tensor& t) {
  std::string s = "(";
  for (int64_t i = 0; i < t.dim(); ++i) {
    if (i) s += ", ";
    s += std::to_string(t.size(i));
  }
  return s + ")";
}

}  // namespace

torch::Tensor TokenMap::spatial() const {
  const auto b = tokens.size(0);
  const auto c = tokens.size(2);
  return tokens.transpose(1, 2).reshape({b, c, height, width});
}

TokenMap TokenMap::from_spatial(const torch::Tensor& map) {
  if (map.dim() != 4) throw ShapeError("expected a (B, C, h, w) map, got " + shape_str(map));
  return TokenMap{map.flatten(2).transpose(1, 2), map.size(2), map.size(3)};
}

TokenMap TokenMap::select(const torch::Tensor& batch_indices) const {
  return TokenMap{tokens.index_select(0, batch_indices), height, width};
}

FeaturePyramid FeaturePyramid::select(const torch::Tensor& batch_indices) const {
  FeaturePyramid out;
  for (size_t i = 0; i < encoder_features.size(); ++i) {
    out.encoder_features[i] = encoder_features[i].select(batch_indices);
  }
  out.final_feature = final_feature.select(batch_indices);
  return out;
}

torch::Tensor resize_bilinear(const torch::Tensor& map, int64_t height, int64_t width) {
  if (map.size(2) == height && map.size(3) == width) return map;
  return F::interpolate(map, F::InterpolateFuncOptions()
                                 .size(std::vector<int64_t>{height, width})
                                 .mode(torch::kBilinear)
                                 .align_corners(false));
}

// --- stem / patch embedding -------------------------------------------------

StemImpl::StemImpl(int64_t out_channels) {
  const auto mid = std::max<int64_t>(1, out_channels / 2);
  layers = register_module("layers", torch::nn::Sequential());
  append_conv_norm_act(layers, 3, mid, 2);
  append_conv_norm_act(layers, mid, out_channels, 2);
}

TokenMap StemImpl::forward(const torch::Tensor& image) {
  return TokenMap::from_spatial(layers->forward(image));
}

PatchEmbedImpl::PatchEmbedImpl(int64_t in_channels, int64_t out_channels, bool downsample) {
  proj = register_module(
      "proj", torch::nn::Conv2d(torch::nn::Conv2dOptions(in_channels, out_channels, 3)
                                    .stride(downsample ? 2 : 1)
                                    .padding(1)));
  norm = register_module("norm",
                         torch::nn::LayerNorm(torch::nn::LayerNormOptions({out_channels})));
}

TokenMap PatchEmbedImpl::forward(const torch::Tensor& spatial_map) {
  auto out = TokenMap::from_spatial(proj->forward(spatial_map));
  out.tokens = norm->forward(out.tokens);
  return out;
}

// --- attention --------------------------------------------------------------

torch::Tensor factorized_attention(const torch::Tensor& q, const torch::Tensor& k,
                                   const torch::Tensor& v) {
  if (q.dim() != 4 || !q.sizes().equals(k.sizes()) || !q.sizes().equals(v.sizes())) {
    throw ShapeError("factorized_attention: q, k, v must share shape (B, heads, N, K); got " +
                     shape_str(q) + ", " + shape_str(k) + ", " + shape_str(v));
  }
  if (!torch::isfinite(q).all().item<bool>() || !torch::isfinite(k).all().item<bool>() ||
      !torch::isfinite(v).all().item<bool>()) {
    throw ContractError("factorized_attention: non-finite input");
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(q.size(3)));
  auto context = torch::softmax(k, /*dim=*/2).transpose(2, 3).matmul(v);  // (B, h, K, K)
  return (q * scale).matmul(context);
}

FactorizedAttentionImpl::FactorizedAttentionImpl(const AttentionOptions& options)
    : num_heads_(options.num_heads), head_dim_(options.channels / options.num_heads) {
  if (options.channels % options.num_heads != 0) {
    throw ShapeError("attention channels " + std::to_string(options.channels) +
                     " not divisible by heads " + std::to_string(options.num_heads));
  }
  qkv = register_module("qkv", torch::nn::Linear(options.channels, 3 * options.channels));
  proj = register_module("proj", torch::nn::Linear(options.channels, options.channels));
  if (options.domain_adapter) {
    adapter = register_module(
        "adapter", DomainAdapter(options.num_domains, options.num_heads, head_dim_,
                                 options.da_reduction));
  }
}

torch::Tensor FactorizedAttentionImpl::forward(const torch::Tensor& x,
                                               const torch::Tensor& domain_one_hot,
                                               AdapterGradient adapter_gradient) {
  const auto b = x.size(0);
  const auto n = x.size(1);
  const auto c = x.size(2);
  auto qkv_out = qkv->forward(x).reshape({b, n, 3, num_heads_, head_dim_}).permute({2, 0, 3, 1, 4});
  auto heads = factorized_attention(qkv_out[0], qkv_out[1], qkv_out[2]);  // (B, H, N, K)
  if (has_adapter()) {
    if (!domain_one_hot.defined()) {
      throw ContractError("domain adapter enabled but no domain label was given");
    }
    auto weights = adapter->forward(domain_one_hot);
    if (adapter_gradient == AdapterGradient::kDetach) weights = weights.detach();
    heads = calibrate(heads, weights);
  }
  return proj->forward(heads.transpose(1, 2).reshape({b, n, c}));
}

TransformerLayerImpl::TransformerLayerImpl(const AttentionOptions& options) {
  const auto c = options.channels;
  pos_embed = register_module(
      "pos_embed", torch::nn::Conv2d(torch::nn::Conv2dOptions(c, c, 3).padding(1).groups(c)));
  norm1 = register_module("norm1", torch::nn::LayerNorm(torch::nn::LayerNormOptions({c})));
  attn = register_module("attn", FactorizedAttention(options));
  norm2 = register_module("norm2", torch::nn::LayerNorm(torch::nn::LayerNormOptions({c})));
  fc1 = register_module("fc1", torch::nn::Linear(c, 4 * c));
  fc2 = register_module("fc2", torch::nn::Linear(4 * c, c));
}

TokenMap TransformerLayerImpl::forward(const TokenMap& x, const torch::Tensor& domain_one_hot,
                                       AdapterGradient adapter_gradient) {
  auto map = x.spatial();
  auto tokens = TokenMap::from_spatial(map + pos_embed->forward(map)).tokens;
  tokens = tokens + attn->forward(norm1->forward(tokens), domain_one_hot, adapter_gradient);
  tokens = tokens + fc2->forward(torch::gelu(fc1->forward(norm2->forward(tokens))));
  return TokenMap{tokens, x.height, x.width};
}

TransformerBlockImpl::TransformerBlockImpl(int64_t in_channels, bool downsample,
                                           int64_t num_layers, const AttentionOptions& options) {
  patch_embed =
      register_module("patch_embed", PatchEmbed(in_channels, options.channels, downsample));
  layers = register_module("layers", torch::nn::ModuleList());
  for (int64_t i = 0; i < num_layers; ++i) layers->push_back(TransformerLayer(options));
}

TokenMap TransformerBlockImpl::forward(const torch::Tensor& spatial_map,
                                       const torch::Tensor& domain_one_hot,
                                       AdapterGradient adapter_gradient) {
  auto x = patch_embed->forward(spatial_map);
  for (const auto& layer : *layers) {
    x = layer->as<TransformerLayer>()->forward(x, domain_one_hot, adapter_gradient);
  }
  return x;
}

BridgeImpl::BridgeImpl(int64_t channels, int64_t hidden) {
  layers = register_module("layers", torch::nn::Sequential());
  append_conv_norm_act(layers, channels, hidden, 1);
  append_conv_norm_act(layers, hidden, channels, 1);
}

TokenMap BridgeImpl::forward(const TokenMap& x) {
  return TokenMap::from_spatial(layers->forward(x.spatial()));
}

// --- universal network ------------------------------------------------------

UniversalNetworkImpl::UniversalNetworkImpl(const ModelConfig& config) : config_(config) {
  config_.validate();
  const auto& ch = config_.encoder_channels;
  const auto& depth = config_.layers_per_block;

  auto attention = [&](int64_t channels) {
    AttentionOptions o;
    o.channels = channels;
    o.num_heads = config_.num_heads;
    o.domain_adapter = config_.da_enabled;
    o.num_domains = config_.num_domains;
    o.da_reduction = config_.da_reduction;
    return o;
  };

  stem = register_module("stem", Stem(ch[0]));
  for (int i = 0; i < 4; ++i) {
    const auto in = i == 0 ? ch[0] : ch[i - 1];
    encoder[i] = register_module("encoder" + std::to_string(i + 1),
                                 TransformerBlock(in, /*downsample=*/i > 0, depth[i],
                                                  attention(ch[i])));
  }
  bridge = register_module("bridge", Bridge(ch[3], config_.bridge_hidden));

  // Decoding block 5+j fuses the upsampled previous output (or the bridge)
  // with the skip of encoding block 4-j.
  const std::array<int64_t, 4> dec_out{ch[2], ch[1], ch[0], ch[0]};
  const std::array<int64_t, 4> dec_prev{ch[3], dec_out[0], dec_out[1], dec_out[2]};
  for (int j = 0; j < 4; ++j) {
    const auto skip = ch[3 - j];
    decoder[j] = register_module("decoder" + std::to_string(j + 5),
                                 TransformerBlock(dec_prev[j] + skip, /*downsample=*/false,
                                                  depth[4 + j], attention(dec_out[j])));
  }
  head = register_module("head", torch::nn::Conv2d(torch::nn::Conv2dOptions(ch[0], 1, 1)));
}

UniversalOutput UniversalNetworkImpl::forward(const torch::Tensor& image,
                                              const torch::Tensor& domains,
                                              AdapterGradient adapter_gradient) {
  if (image.dim() != 4 || image.size(1) != 3) {
    throw ShapeError("image must be (B, 3, H, W), got " + shape_str(image));
  }
  const auto h = image.size(2);
  const auto w = image.size(3);
  if (h % 32 != 0 || w % 32 != 0) {
    throw ShapeError("image " + std::to_string(h) + "x" + std::to_string(w) +
                     " not divisible by 32");
  }

  torch::Tensor one_hot;
  if (config_.da_enabled) {
    if (!domains.defined()) {
      throw ContractError("domain labels are required when the domain adapter is enabled");
    }
    if (domains.dim() != 1 || domains.size(0) != image.size(0)) {
      throw ContractError("need exactly one domain label per image");
    }
    one_hot = one_hot_labels(domains, config_.num_domains, image.scalar_type());
  }

  UniversalOutput out;
  auto x = stem->forward(image);
  for (int i = 0; i < 4; ++i) {
    x = encoder[i]->forward(x.spatial(), one_hot, adapter_gradient);
    out.pyramid.encoder_features[i] = x;
  }
  x = bridge->forward(x);
  for (int j = 0; j < 4; ++j) {
    auto prev = x.spatial();
    const auto& skip = out.pyramid.encoder_features[3 - j];
    if (j > 0) prev = resize_bilinear(prev, skip.height, skip.width);
    x = decoder[j]->forward(torch::cat({prev, skip.spatial()}, 1), one_hot, adapter_gradient);
  }
  out.pyramid.final_feature = x;
  out.logits = resize_bilinear(head->forward(x.spatial()), h, w);
  return out;
}

int64_t UniversalNetworkImpl::parameter_count() const {
  int64_t n = 0;
  for (const auto& p : parameters()) n += p.numel();
  return n;
}

bool is_adapter_parameter_name(const std::string& name) {
  return name.rfind("adapter.", 0) == 0 || name.find(".adapter.") != std::string::npos;
}

std::vector<torch::Tensor> UniversalNetworkImpl::adapter_parameters() const {
  std::vector<torch::Tensor> out;
  for (const auto& item : named_parameters()) {
    if (is_adapter_parameter_name(item.key())) out.push_back(item.value());
  }
  return out;
}

std::vector<torch::Tensor> UniversalNetworkImpl::non_adapter_parameters() const {
  std::vector<torch::Tensor> out;
  for (const auto& item : named_parameters()) {
    if (!is_adapter_parameter_name(item.key())) out.push_back(item.value());
  }
  return out;
}

}  // namespace mdvit
