#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mdvit/backbone.hpp"
#include "mdvit/data.hpp"

namespace mdvit {

/// Pixel counts of a binary prediction P against a binary target T.
struct MaskCounts {
  int64_t intersection = 0;  // |P n T|
  int64_t predicted = 0;     // |P|
  int64_t target = 0;        // |T|

  int64_t union_size() const { return predicted + target - intersection; }
};

/// Both masks are treated as binary (> 0.5). Throws ShapeError on mismatch.
MaskCounts mask_counts(const torch::Tensor& pred_mask, const torch::Tensor& target);

/// 2|P n T| / (|P| + |T|); 1 when both masks are empty.
double dice_from_counts(const MaskCounts& c);
/// |P n T| / |P u T|; 1 when both masks are empty.
double iou_from_counts(const MaskCounts& c);

double dice_score(const torch::Tensor& pred_mask, const torch::Tensor& target);
double iou_score(const torch::Tensor& pred_mask, const torch::Tensor& target);

/// Probability threshold used to binarize predictions.
inline constexpr double kDecisionThreshold = 0.5;

/// Sigmoid probabilities (B, 1, H, W) in evaluation mode, no gradients,
/// processed in chunks of `chunk` images.
torch::Tensor predict_probabilities(UniversalNetwork& net, const torch::Tensor& images,
                                    const torch::Tensor& domains, int64_t chunk = 16);

/// A network and, for separately trained models, the one domain it serves.
struct EvalTarget {
  UniversalNetwork net{nullptr};
  std::optional<int64_t> domain;
};

struct ImageMetrics {
  std::string id;
  int64_t domain = 0;
  double dice = 0.0;
  double iou = 0.0;
};

/// Per-domain Dice/IOU in percent. For a single fold `std_*` is zero; for
/// an aggregate over folds it is the sample standard deviation of the
/// cross-domain average across folds.
struct EvalReport {
  std::string paradigm;
  std::vector<int> folds;
  int64_t parameter_count = 0;
  std::vector<std::string> domain_names;
  std::vector<double> dice;  // percent, per domain
  std::vector<double> iou;   // percent, per domain
  double avg_dice = 0.0;
  double avg_iou = 0.0;
  double std_dice = 0.0;
  double std_iou = 0.0;
  std::vector<ImageMetrics> images;
};

/// Mean per-image metrics over `indices` of one dataset.
std::vector<ImageMetrics> score_images(UniversalNetwork& net, const DomainDataset& dataset,
                                       const std::vector<int64_t>& indices);

/// Scores fold `fold`'s test split of every dataset. Each dataset is scored
/// by the target bound to its domain, else by the unbound (universal) one.
EvalReport evaluate(std::vector<EvalTarget> targets, const std::vector<DomainDataset>& datasets,
                    int fold, const std::string& paradigm);

/// Means over folds; std across folds of the cross-domain average.
EvalReport aggregate_folds(const std::vector<EvalReport>& per_fold);

/// Recomputes per-domain means and averages from `report.images`.
void recompute_summary(EvalReport& report);

std::string format_report_table(const std::vector<EvalReport>& reports);
std::string report_csv(const std::vector<EvalReport>& reports);
std::string report_to_json(const EvalReport& report);
EvalReport report_from_json(const std::string& text);

/// Writes report.csv, report.txt and report.json into `dir`.
void write_report(const EvalReport& report, const std::filesystem::path& dir);

struct NktFlag {
  std::string paradigm;
  int64_t domain = 0;
  std::string domain_name;
  double separate_dice = 0.0;
  double paradigm_dice = 0.0;
};

struct ParadigmComparison {
  std::string table;
  std::vector<NktFlag> flags;
};

/// Flags every (paradigm, domain) whose Dice falls more than `margin` points
/// below the separately trained ("st") report. Throws ContractError when the
/// reports do not cover the same domains and folds or no "st" report exists.
ParadigmComparison compare_paradigms(const std::vector<EvalReport>& reports, double margin = 1.0);

}  // namespace mdvit
