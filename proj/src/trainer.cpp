#include "mdvit/trainer.hpp"

#include <fmt/format.h>

#include <cmath>
#include <fstream>
#include <json.hpp>
#include <random>

#include "mdvit/checkpoint.hpp"
#include "mdvit/errors.hpp"
#include "mdvit/evaluator.hpp"
#include "mdvit/log.hpp"

namespace mdvit {

double lr_at(int64_t epoch, const TrainConfig& config) {
  if (epoch < 0) throw ContractError("epoch must be >= 0");
  return config.base_lr * std::pow(config.lr_gamma, static_cast<double>(epoch / config.lr_step));
}

ModelConfig config_for_paradigm(const ModelConfig& config, Paradigm paradigm) {
  auto out = config;
  const bool mat = paradigm == Paradigm::kMultiDomainAdaptive;
  out.da_enabled = mat;
  out.mkd_enabled = mat;
  return out;
}

// --- objective --------------------------------------------------------------

LossTerms mat_terms(Model& model, const DomainBatch& batch) {
  const auto dtype = model.universal->parameters().front().scalar_type();
  const auto images = batch.images.to(dtype);
  const auto masks = batch.masks.to(dtype);
  auto out = model.universal->forward(images, batch.domains);
  std::vector<torch::Tensor> peer_logits(model.peers.size());
  for (size_t m = 0; m < model.peers.size(); ++m) {
    const auto rows = (batch.domains == static_cast<int64_t>(m)).nonzero().flatten();
    if (rows.numel() == 0) continue;
    peer_logits[m] =
        model.peers[m]->forward(out.pyramid.select(rows), images.size(2), images.size(3));
  }
  return total_loss(masks, out.logits, peer_logits, batch.domains, model.config.alpha,
                    model.config.beta);
}

void backward_mat(Model& model, const LossTerms& terms, double alpha, double beta,
                  const TermSelection& selection) {
  torch::Tensor main;
  if (selection.seg_universal) main = terms.seg_universal;
  if (selection.mkd && beta != 0.0 && terms.mkd_sum.requires_grad()) {
    main = main.defined() ? main + beta * terms.mkd_sum : beta * terms.mkd_sum;
  }
  const bool main_has_grad = main.defined() && main.requires_grad();

  if (selection.seg_peer && alpha != 0.0 && terms.peer_sum.requires_grad()) {
    auto inputs = model.universal->non_adapter_parameters();
    const auto peer = model.peer_parameters();
    inputs.insert(inputs.end(), peer.begin(), peer.end());
    (alpha * terms.peer_sum).backward({}, /*retain_graph=*/main_has_grad, false, inputs);
  }
  if (main_has_grad) main.backward();
}

// --- state / steps ----------------------------------------------------------

TrainState::TrainState(Model m, const TrainConfig& config) : model(std::move(m)) {
  lr = config.base_lr;
  optimizer = std::make_unique<torch::optim::AdamW>(
      model.parameters(), torch::optim::AdamWOptions(config.base_lr).weight_decay(config.weight_decay));
}

void TrainState::set_lr(double value) {
  lr = value;
  for (auto& group : optimizer->param_groups()) {
    static_cast<torch::optim::AdamWOptions&>(group.options()).lr(value);
  }
}

namespace {

void require_balanced(const DomainBatch& batch, int64_t num_domains) {
  const auto counts = torch::bincount(batch.domains, {}, num_domains);
  if (counts.size(0) != num_domains) throw ContractError("batch carries unknown domain labels");
  const auto lo = counts.min().item<int64_t>();
  const auto hi = counts.max().item<int64_t>();
  if (lo != hi || lo == 0) {
    throw ContractError("MAT batch is not balanced across domains (min " + std::to_string(lo) +
                        ", max " + std::to_string(hi) + " samples per domain)");
  }
}

}  // namespace

LossBundle mat_step(const DomainBatch& batch, TrainState& state) {
  auto& model = state.model;
  if (!model.config.da_enabled || !model.config.mkd_enabled) {
    throw ContractError("mat_step needs a model with domain adapters and peers");
  }
  require_balanced(batch, model.config.num_domains);
  model.set_training(true);
  state.optimizer->zero_grad();
  const auto terms = mat_terms(model, batch);
  backward_mat(model, terms, model.config.alpha, model.config.beta);
  state.optimizer->step();
  ++state.step;
  return to_bundle(terms);
}

LossBundle seg_step(const DomainBatch& batch, TrainState& state) {
  auto& model = state.model;
  model.set_training(true);
  state.optimizer->zero_grad();
  const auto dtype = model.universal->parameters().front().scalar_type();
  auto out = model.universal->forward(batch.images.to(dtype), batch.domains);
  auto loss = seg_loss(out.logits, batch.masks.to(dtype));
  loss.backward();
  state.optimizer->step();
  ++state.step;
  LossBundle bundle;
  bundle.l_seg_u = loss.item<double>();
  bundle.total = bundle.l_seg_u;
  return bundle;
}

// --- training loop ----------------------------------------------------------

namespace {

struct Split {
  std::vector<std::vector<int64_t>> train;  // per dataset
  std::vector<std::vector<int64_t>> val;
};

Split make_split(const std::vector<DomainDataset>& datasets, const TrainConfig& cfg) {
  Split split;
  for (const auto& ds : datasets) {
    auto idx = ds.train_indices(static_cast<int>(cfg.fold));
    if (idx.empty()) throw ContractError("dataset '" + ds.name + "' has no training samples");
    std::mt19937_64 rng(derive_seed(cfg.seed, 0x7a1, static_cast<uint64_t>(ds.domain)));
    std::shuffle(idx.begin(), idx.end(), rng);
    auto n_val = static_cast<size_t>(std::llround(cfg.val_fraction * static_cast<double>(idx.size())));
    n_val = std::min(n_val, idx.size() - 1);
    std::vector<int64_t> val(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
    std::vector<int64_t> train(idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
    std::sort(val.begin(), val.end());
    std::sort(train.begin(), train.end());
    split.val.push_back(std::move(val));
    split.train.push_back(std::move(train));
  }
  return split;
}

std::vector<torch::Tensor> snapshot(const Model& model) {
  std::vector<torch::Tensor> out;
  for (const auto& p : model.universal->parameters()) out.push_back(p.detach().clone());
  return out;
}

void restore(Model& model, const std::vector<torch::Tensor>& values) {
  torch::NoGradGuard no_grad;
  auto params = model.universal->parameters();
  for (size_t i = 0; i < params.size(); ++i) params[i].copy_(values[i]);
}

class JsonlLog {
 public:
  explicit JsonlLog(const std::optional<std::filesystem::path>& dir) {
    if (dir) {
      std::filesystem::create_directories(*dir);
      out_.open(*dir / "train_log.jsonl", std::ios::app);
    }
  }
  void write(const std::string& tag, const EpochLog& e) {
    if (!out_.is_open()) return;
    nlohmann::json j{{"model", tag},          {"epoch", e.epoch},   {"lr", e.lr},
                     {"steps", e.steps},      {"seg_u", e.seg_universal},
                     {"seg_a", e.seg_peer},   {"mkd", e.mkd},       {"total", e.total},
                     {"val_dice", e.val_dice}};
    out_ << j.dump() << '\n';
    out_.flush();
  }

 private:
  std::ofstream out_;
};

TrainedModel train_one(const std::string& tag, const std::vector<DomainDataset>& datasets,
                       const ModelConfig& model_config, const TrainConfig& cfg,
                       uint64_t model_seed, std::optional<int64_t> domain,
                       const TrainOptions& options, JsonlLog& jsonl) {
  const bool mat = model_config.da_enabled && model_config.mkd_enabled;
  const auto split = make_split(datasets, cfg);
  const int64_t batch_size = cfg.batch_size;
  BalancedSampler sampler(split.train, batch_size, derive_seed(model_seed, 0x5a3));

  TrainState state(Model(model_config, model_seed), cfg);
  TrainedModel result{state.model, domain, {}, std::nullopt, std::nullopt};
  std::vector<torch::Tensor> best;

  for (int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.max_steps > 0 && state.step >= cfg.max_steps) break;
    state.epoch = epoch;
    state.set_lr(lr_at(epoch, cfg));
    EpochLog log;
    log.epoch = epoch;
    log.lr = state.lr;

    const auto batches = sampler.epoch(epoch);
    for (size_t b = 0; b < batches.size(); ++b) {
      if (cfg.max_steps > 0 && state.step >= cfg.max_steps) break;
      std::vector<Sample> samples;
      samples.reserve(batches[b].size());
      for (size_t j = 0; j < batches[b].size(); ++j) {
        const auto& ref = batches[b][j];
        const auto& s = datasets[static_cast<size_t>(ref.domain)].samples[static_cast<size_t>(ref.index)];
        samples.push_back(cfg.augment.enabled
                              ? augment(s, cfg.augment,
                                        derive_seed(model_seed, static_cast<uint64_t>(epoch), b, j))
                              : s);
      }
      const auto batch = collate(samples);
      const auto bundle = mat ? mat_step(batch, state) : seg_step(batch, state);
      log.seg_universal += bundle.l_seg_u;
      for (const auto v : bundle.l_seg_a) log.seg_peer += v;
      for (const auto v : bundle.l_mkd) log.mkd += v;
      log.total += bundle.total;
      ++log.steps;
    }
    if (log.steps > 0) {
      const auto n = static_cast<double>(log.steps);
      log.seg_universal /= n;
      log.seg_peer /= n;
      log.mkd /= n;
      log.total /= n;
    }

    bool have_val = false;
    double mean_val = 0.0;
    for (size_t d = 0; d < datasets.size(); ++d) {
      if (split.val[d].empty()) continue;
      have_val = true;
      const auto scored = score_images(state.model.universal, datasets[d], split.val[d]);
      double s = 0.0;
      for (const auto& im : scored) s += im.dice;
      log.val_dice.push_back(s / static_cast<double>(scored.size()));
      mean_val += log.val_dice.back() / static_cast<double>(datasets.size());
    }
    if (have_val && (!result.best_val_dice || mean_val > *result.best_val_dice)) {
      result.best_val_dice = mean_val;
      result.best_epoch = epoch;
      best = snapshot(state.model);
    }

    if (options.log_epochs) {
      std::string val;
      for (const auto v : log.val_dice) val += fmt::format(" {:.4f}", v);
      log::info("[{}] epoch {} lr {:.3e} steps {} seg_u {:.4f} seg_a {:.4f} mkd {:.4f} total {:.4f} val_dice[{} ]",
                   tag, epoch, log.lr, state.step, log.seg_universal, log.seg_peer, log.mkd,
                   log.total, val);
    }
    jsonl.write(tag, log);
    result.history.push_back(std::move(log));
  }

  result.model = state.model;
  if (options.out_dir) {
    ExperimentConfig snapshot_config{model_config, cfg};
    CheckpointInfo info{snapshot_config, CheckpointKind::kInference, domain};
    save_checkpoint(*options.out_dir / (tag + ".ckpt"), result.model, info);
    if (mat) {
      info.kind = CheckpointKind::kTraining;
      save_checkpoint(*options.out_dir / (tag + "_train.ckpt"), result.model, info);
    }
    if (!best.empty()) {
      Model best_model(model_config, model_seed);
      best_model.peers.clear();
      restore(best_model, best);
      info.kind = CheckpointKind::kInference;
      save_checkpoint(*options.out_dir / (tag + "_best.ckpt"), best_model, info);
    }
  }
  return result;
}

}  // namespace

TrainResult train(Paradigm paradigm, const std::vector<DomainDataset>& datasets,
                  const ModelConfig& model_config, const TrainConfig& train_config,
                  const TrainOptions& options) {
  model_config.validate();
  train_config.validate(model_config);
  if (datasets.empty()) throw ContractError("train: no datasets");
  const bool mat = paradigm == Paradigm::kMultiDomainAdaptive;
  if (mat != model_config.da_enabled || mat != model_config.mkd_enabled) {
    throw ContractError(std::string("paradigm '") + std::string(paradigm_name(paradigm)) +
                        "' requires da_enabled=" + (mat ? "true" : "false") +
                        " and mkd_enabled=" + (mat ? "true" : "false"));
  }
  const auto m = static_cast<int64_t>(datasets.size());
  if (paradigm != Paradigm::kSeparate) {
    if (m != model_config.num_domains) {
      throw ContractError("got " + std::to_string(m) + " datasets but num_domains=" +
                          std::to_string(model_config.num_domains));
    }
    for (int64_t d = 0; d < m; ++d) {
      if (datasets[static_cast<size_t>(d)].domain != d) {
        throw ContractError("dataset '" + datasets[static_cast<size_t>(d)].name +
                            "' must carry domain index " + std::to_string(d));
      }
    }
  }

  JsonlLog jsonl(options.out_dir);
  TrainResult result;
  result.report.paradigm = paradigm;
  auto record = [&](const std::string& tag, TrainedModel trained) {
    result.report.training_parameters += trained.model.count_parameters(ParameterRole::kTrainingTotal);
    result.report.inference_parameters += trained.model.count_parameters(ParameterRole::kInference);
    if (options.out_dir) result.report.checkpoints.push_back(*options.out_dir / (tag + ".ckpt"));
    result.models.push_back(std::move(trained));
  };

  if (paradigm == Paradigm::kSeparate) {
    for (int64_t d = 0; d < m; ++d) {
      const auto& ds = datasets[static_cast<size_t>(d)];
      const auto tag = "st_" + ds.name;
      record(tag, train_one(tag, {ds}, model_config, train_config,
                            derive_seed(train_config.seed, 0x57, static_cast<uint64_t>(d)),
                            ds.domain, options, jsonl));
    }
  } else {
    const auto tag = std::string(paradigm_name(paradigm));
    record(tag, train_one(tag, datasets, model_config, train_config,
                          derive_seed(train_config.seed, mat ? 0x3a7 : 0x17), std::nullopt, options,
                          jsonl));
  }
  return result;
}

}  // namespace mdvit
