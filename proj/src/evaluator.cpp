#include "mdvit/evaluator.hpp"

#include <fmt/format.h>

#include <cmath>
#include <fstream>
#include <json.hpp>
#include <map>

#include "mdvit/errors.hpp"

namespace mdvit {

MaskCounts mask_counts(const torch::Tensor& pred_mask, const torch::Tensor& target) {
  if (!pred_mask.sizes().equals(target.sizes())) {
    throw ShapeError("mask shapes differ");
  }
  const auto p = pred_mask > 0.5;
  const auto t = target > 0.5;
  MaskCounts c;
  c.intersection = (p & t).sum().item<int64_t>();
  c.predicted = p.sum().item<int64_t>();
  c.target = t.sum().item<int64_t>();
  return c;
}

double dice_from_counts(const MaskCounts& c) {
  const auto denom = c.predicted + c.target;
  if (denom == 0) return 1.0;
  return 2.0 * static_cast<double>(c.intersection) / static_cast<double>(denom);
}

double iou_from_counts(const MaskCounts& c) {
  const auto denom = c.union_size();
  if (denom == 0) return 1.0;
  return static_cast<double>(c.intersection) / static_cast<double>(denom);
}

double dice_score(const torch::Tensor& pred_mask, const torch::Tensor& target) {
  return dice_from_counts(mask_counts(pred_mask, target));
}

double iou_score(const torch::Tensor& pred_mask, const torch::Tensor& target) {
  return iou_from_counts(mask_counts(pred_mask, target));
}

torch::Tensor predict_probabilities(UniversalNetwork& net, const torch::Tensor& images,
                                    const torch::Tensor& domains, int64_t chunk) {
  torch::NoGradGuard no_grad;
  const bool was_training = net->is_training();
  net->eval();
  const auto dtype = net->parameters().front().scalar_type();
  std::vector<torch::Tensor> parts;
  for (int64_t start = 0; start < images.size(0); start += chunk) {
    const auto len = std::min(chunk, images.size(0) - start);
    auto x = images.narrow(0, start, len).to(dtype);
    auto d = domains.defined() ? domains.narrow(0, start, len) : torch::Tensor();
    parts.push_back(torch::sigmoid(net->forward(x, d).logits));
  }
  net->train(was_training);
  return torch::cat(parts, 0);
}

std::vector<ImageMetrics> score_images(UniversalNetwork& net, const DomainDataset& dataset,
                                       const std::vector<int64_t>& indices) {
  std::vector<ImageMetrics> out;
  if (indices.empty()) return out;
  std::vector<Sample> samples;
  for (const auto i : indices) samples.push_back(dataset.samples.at(static_cast<size_t>(i)));
  const auto batch = collate(samples);
  const auto probs = predict_probabilities(net, batch.images, batch.domains);
  const auto pred = probs > kDecisionThreshold;
  for (size_t i = 0; i < samples.size(); ++i) {
    const auto c = mask_counts(pred[static_cast<int64_t>(i)], batch.masks[static_cast<int64_t>(i)]);
    out.push_back({samples[i].id, dataset.domain, dice_from_counts(c), iou_from_counts(c)});
  }
  return out;
}

void recompute_summary(EvalReport& report) {
  const auto m = report.domain_names.size();
  std::vector<double> dice_sum(m, 0.0), iou_sum(m, 0.0);
  std::vector<int64_t> count(m, 0);
  for (const auto& im : report.images) {
    const auto d = static_cast<size_t>(im.domain);
    if (d >= m) throw ContractError("image metric refers to unknown domain");
    dice_sum[d] += im.dice;
    iou_sum[d] += im.iou;
    ++count[d];
  }
  report.dice.assign(m, 0.0);
  report.iou.assign(m, 0.0);
  report.avg_dice = 0.0;
  report.avg_iou = 0.0;
  for (size_t d = 0; d < m; ++d) {
    if (count[d] == 0) throw ContractError("domain " + report.domain_names[d] + " has no scored images");
    report.dice[d] = 100.0 * dice_sum[d] / static_cast<double>(count[d]);
    report.iou[d] = 100.0 * iou_sum[d] / static_cast<double>(count[d]);
    report.avg_dice += report.dice[d] / static_cast<double>(m);
    report.avg_iou += report.iou[d] / static_cast<double>(m);
  }
}

EvalReport evaluate(std::vector<EvalTarget> targets, const std::vector<DomainDataset>& datasets,
                    int fold, const std::string& paradigm) {
  if (fold < 0 || fold >= kNumFolds) {
    throw ContractError("fold " + std::to_string(fold) + " outside [0, " +
                        std::to_string(kNumFolds) + ")");
  }
  if (targets.empty()) throw ContractError("evaluate: no model given");
  EvalReport report;
  report.paradigm = paradigm;
  report.folds = {fold};
  for (const auto& t : targets) {
    // A separately trained set ships one network per domain.
    report.parameter_count = std::max(report.parameter_count, t.net->parameter_count());
  }
  for (const auto& ds : datasets) {
    report.domain_names.push_back(ds.name);
    EvalTarget* chosen = nullptr;
    for (auto& t : targets) {
      if (t.domain && *t.domain == ds.domain) chosen = &t;
    }
    if (chosen == nullptr) {
      for (auto& t : targets) {
        if (!t.domain) chosen = &t;
      }
    }
    if (chosen == nullptr) {
      throw ContractError("no model covers domain '" + ds.name + "'");
    }
    const auto& cfg = chosen->net->config();
    if (cfg.da_enabled && ds.domain >= cfg.num_domains) {
      throw ContractError("domain '" + ds.name + "' exceeds the model's domain count");
    }
    auto scored = score_images(chosen->net, ds, ds.test_indices(fold));
    report.images.insert(report.images.end(), scored.begin(), scored.end());
  }
  // Domains are indexed by their position in `datasets`.
  for (auto& im : report.images) {
    for (size_t d = 0; d < datasets.size(); ++d) {
      if (datasets[d].domain == im.domain) im.domain = static_cast<int64_t>(d);
    }
  }
  recompute_summary(report);
  return report;
}

EvalReport aggregate_folds(const std::vector<EvalReport>& per_fold) {
  if (per_fold.empty()) throw ContractError("aggregate_folds: no reports");
  EvalReport out;
  out.paradigm = per_fold.front().paradigm;
  out.parameter_count = per_fold.front().parameter_count;
  out.domain_names = per_fold.front().domain_names;
  const auto m = out.domain_names.size();
  out.dice.assign(m, 0.0);
  out.iou.assign(m, 0.0);
  const auto n = static_cast<double>(per_fold.size());
  for (const auto& r : per_fold) {
    if (r.domain_names != out.domain_names) {
      throw ContractError("aggregate_folds: reports cover different domains");
    }
    out.folds.insert(out.folds.end(), r.folds.begin(), r.folds.end());
    out.images.insert(out.images.end(), r.images.begin(), r.images.end());
    for (size_t d = 0; d < m; ++d) {
      out.dice[d] += r.dice[d] / n;
      out.iou[d] += r.iou[d] / n;
    }
    out.avg_dice += r.avg_dice / n;
    out.avg_iou += r.avg_iou / n;
  }
  if (per_fold.size() > 1) {
    double vd = 0.0, vi = 0.0;
    for (const auto& r : per_fold) {
      vd += (r.avg_dice - out.avg_dice) * (r.avg_dice - out.avg_dice);
      vi += (r.avg_iou - out.avg_iou) * (r.avg_iou - out.avg_iou);
    }
    out.std_dice = std::sqrt(vd / (n - 1.0));
    out.std_iou = std::sqrt(vi / (n - 1.0));
  }
  return out;
}

// --- output -----------------------------------------------------------------

std::string format_report_table(const std::vector<EvalReport>& reports) {
  if (reports.empty()) return {};
  const auto& names = reports.front().domain_names;
  std::vector<size_t> width;
  for (const auto& n : names) width.push_back(std::max<size_t>(8, n.size()));

  std::string out;
  for (const auto* metric : {"Dice", "IOU"}) {
    const bool dice = std::string_view(metric) == "Dice";
    out += fmt::format("{:<10} {:>10}", fmt::format("{} (%)", metric), "#param(M)");
    for (size_t d = 0; d < names.size(); ++d) out += fmt::format(" {:>{}}", names[d], width[d]);
    out += fmt::format(" {:>16}\n", "avg ± std");
    for (const auto& r : reports) {
      const auto& values = dice ? r.dice : r.iou;
      out += fmt::format("{:<10} {:>10.2f}", r.paradigm, static_cast<double>(r.parameter_count) / 1e6);
      for (size_t d = 0; d < values.size(); ++d) out += fmt::format(" {:>{}.2f}", values[d], width[d]);
      const auto avg = dice ? r.avg_dice : r.avg_iou;
      const auto std = dice ? r.std_dice : r.std_iou;
      out += fmt::format(" {:>16}\n", fmt::format("{:.2f} ± {:.2f}", avg, std));
    }
  }
  out += "(std across folds of the cross-domain average)\n";
  return out;
}

std::string report_csv(const std::vector<EvalReport>& reports) {
  if (reports.empty()) return {};
  std::string out = "paradigm,params";
  for (const auto& n : reports.front().domain_names) out += ",dice_" + n;
  out += ",dice_avg,dice_std";
  for (const auto& n : reports.front().domain_names) out += ",iou_" + n;
  out += ",iou_avg,iou_std\n";
  for (const auto& r : reports) {
    out += fmt::format("{},{}", r.paradigm, r.parameter_count);
    for (const auto v : r.dice) out += fmt::format(",{:.2f}", v);
    out += fmt::format(",{:.2f},{:.2f}", r.avg_dice, r.std_dice);
    for (const auto v : r.iou) out += fmt::format(",{:.2f}", v);
    out += fmt::format(",{:.2f},{:.2f}\n", r.avg_iou, r.std_iou);
  }
  return out;
}

std::string report_to_json(const EvalReport& r) {
  nlohmann::json j;
  j["paradigm"] = r.paradigm;
  j["folds"] = r.folds;
  j["parameter_count"] = r.parameter_count;
  j["domains"] = r.domain_names;
  j["dice"] = r.dice;
  j["iou"] = r.iou;
  j["avg_dice"] = r.avg_dice;
  j["avg_iou"] = r.avg_iou;
  j["std_dice"] = r.std_dice;
  j["std_iou"] = r.std_iou;
  j["std_over"] = "folds";
  auto& images = j["images"] = nlohmann::json::array();
  for (const auto& im : r.images) {
    images.push_back({{"id", im.id}, {"domain", im.domain}, {"dice", im.dice}, {"iou", im.iou}});
  }
  return j.dump(2);
}

EvalReport report_from_json(const std::string& text) {
  EvalReport r;
  try {
    const auto j = nlohmann::json::parse(text);
    r.paradigm = j.at("paradigm").get<std::string>();
    r.folds = j.at("folds").get<std::vector<int>>();
    r.parameter_count = j.at("parameter_count").get<int64_t>();
    r.domain_names = j.at("domains").get<std::vector<std::string>>();
    r.dice = j.at("dice").get<std::vector<double>>();
    r.iou = j.at("iou").get<std::vector<double>>();
    r.avg_dice = j.at("avg_dice").get<double>();
    r.avg_iou = j.at("avg_iou").get<double>();
    r.std_dice = j.at("std_dice").get<double>();
    r.std_iou = j.at("std_iou").get<double>();
    for (const auto& im : j.at("images")) {
      r.images.push_back({im.at("id").get<std::string>(), im.at("domain").get<int64_t>(),
                          im.at("dice").get<double>(), im.at("iou").get<double>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed report: ") + e.what());
  }
  if (r.dice.size() != r.domain_names.size() || r.iou.size() != r.domain_names.size()) {
    throw ParseError("malformed report: per-domain arrays do not match the domain list");
  }
  return r;
}

void write_report(const EvalReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "report.csv") << report_csv({report});
  std::ofstream(dir / "report.txt") << format_report_table({report});
  std::ofstream(dir / "report.json") << report_to_json(report) << '\n';
}

ParadigmComparison compare_paradigms(const std::vector<EvalReport>& reports, double margin) {
  if (reports.empty()) throw ContractError("compare_paradigms: no reports");
  const auto& names = reports.front().domain_names;
  auto folds = reports.front().folds;
  std::sort(folds.begin(), folds.end());
  const EvalReport* separate = nullptr;
  for (const auto& r : reports) {
    auto f = r.folds;
    std::sort(f.begin(), f.end());
    if (r.domain_names != names || f != folds) {
      throw ContractError("compare_paradigms: reports cover different domains or folds");
    }
    if (r.paradigm == "st" && separate == nullptr) separate = &r;
  }
  if (separate == nullptr) throw ContractError("compare_paradigms: need an 'st' report");

  ParadigmComparison cmp;
  for (const auto& r : reports) {
    if (&r == separate) continue;
    for (size_t d = 0; d < names.size(); ++d) {
      if (separate->dice[d] - r.dice[d] > margin) {
        cmp.flags.push_back({r.paradigm, static_cast<int64_t>(d), names[d], separate->dice[d], r.dice[d]});
      }
    }
  }
  cmp.table = format_report_table(reports);
  for (const auto& f : cmp.flags) {
    cmp.table += fmt::format("NKT {} on {}: {:.2f} vs st {:.2f}\n", f.paradigm, f.domain_name,
                             f.paradigm_dice, f.separate_dice);
  }
  if (cmp.flags.empty()) cmp.table += "no NKT flags\n";
  return cmp;
}

}  // namespace mdvit
