#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mdvit/config.hpp"
#include "mdvit/data.hpp"
#include "mdvit/losses.hpp"
#include "mdvit/model.hpp"

namespace mdvit {

/// Step decay: base_lr * gamma^floor(epoch / lr_step).
double lr_at(int64_t epoch, const TrainConfig& config);

/// Which terms of the objective to backpropagate.
struct TermSelection {
  bool seg_universal = true;
  bool seg_peer = true;
  bool mkd = true;
};

/// Runs the universal network on the batch (per-sample domain labels) and
/// each peer on its own domain's slice of the feature pyramid.
LossTerms mat_terms(Model& model, const DomainBatch& batch);

/// Accumulates gradients of the selected terms into `.grad`.
///
/// alpha * sum(peer segmentation) is differentiated with respect to every
/// parameter except the domain adapters'; the universal segmentation loss and
/// beta * sum(distillation) reach all parameters. Because the adapter
/// weights depend only on the domain label and the adapter parameters, this
/// equals treating the adapter outputs as constants inside the peer
/// segmentation path.
void backward_mat(Model& model, const LossTerms& terms, double alpha, double beta,
                  const TermSelection& selection = {});

/// Optimizer, schedule position and the model being trained.
struct TrainState {
  Model model;
  std::unique_ptr<torch::optim::AdamW> optimizer;
  int64_t epoch = 0;
  int64_t step = 0;
  double lr = 0.0;

  TrainState(Model model, const TrainConfig& config);
  void set_lr(double value);
};

/// One MAT optimization step. Throws ContractError when the batch does not
/// hold the same number of samples from every domain.
LossBundle mat_step(const DomainBatch& batch, TrainState& state);

/// One plain segmentation step (separate and joint training).
LossBundle seg_step(const DomainBatch& batch, TrainState& state);

struct EpochLog {
  int64_t epoch = 0;
  double lr = 0.0;
  int64_t steps = 0;
  double seg_universal = 0.0;
  double seg_peer = 0.0;  // mean over steps of the summed peer losses
  double mkd = 0.0;       // mean over steps of the summed distillation losses
  double total = 0.0;
  std::vector<double> val_dice;  // per domain of this model, fraction in [0, 1]
};

struct TrainedModel {
  Model model;
  std::optional<int64_t> domain;  // set for separately trained models
  std::vector<EpochLog> history;
  std::optional<double> best_val_dice;
  std::optional<int64_t> best_epoch;
};

struct TrainReport {
  Paradigm paradigm = Paradigm::kMultiDomainAdaptive;
  int64_t training_parameters = 0;
  int64_t inference_parameters = 0;
  std::vector<std::filesystem::path> checkpoints;  // inference checkpoints, one per model
};

struct TrainResult {
  std::vector<TrainedModel> models;
  TrainReport report;
};

struct TrainOptions {
  std::optional<std::filesystem::path> out_dir;  // checkpoints + train_log.jsonl
  bool log_epochs = true;
};

/// Trains with the given paradigm on the training split of `train.fold`.
///
/// ST trains one baseline per dataset on that dataset alone; JT trains one
/// baseline on balanced mixed batches; MAT trains the universal network with
/// adapters plus M peers on the full objective. Inference checkpoints hold
/// the universal network only; MAT additionally writes a training
/// checkpoint with the peers. Throws ContractError on a paradigm/config
/// mismatch (ST/JT need adapters and distillation off, MAT needs both on).
TrainResult train(Paradigm paradigm, const std::vector<DomainDataset>& datasets,
                  const ModelConfig& model_config, const TrainConfig& train_config,
                  const TrainOptions& options = {});

/// Copies `config` with adapters/distillation switched to match `paradigm`.
ModelConfig config_for_paradigm(const ModelConfig& config, Paradigm paradigm);

}  // namespace mdvit
