#include "mdvit/cli.hpp"

#include <fmt/format.h>

#include <CLI11.hpp>
#include <algorithm>
#include <fstream>
#include <json.hpp>
#include <optional>
#include <ostream>
#include <sstream>

#include "mdvit/checkpoint.hpp"
#include "mdvit/config.hpp"
#include "mdvit/data.hpp"
#include "mdvit/errors.hpp"
#include "mdvit/evaluator.hpp"
#include "mdvit/model.hpp"
#include "mdvit/trainer.hpp"

namespace mdvit::cli {

namespace {

using nlohmann::json;

struct TrainArgs {
  std::string config = "default";
  std::string data;
  std::string paradigm;
  std::string out;
  std::optional<uint64_t> seed;
  std::optional<int64_t> fold;
  std::optional<int64_t> epochs;
  std::optional<int64_t> max_steps;
};

struct EvalArgs {
  std::vector<std::string> ckpts;
  std::string data;
  int fold = 0;
  std::string out;
  std::string paradigm;
};

struct SynthArgs {
  std::string out;
  int64_t domains = 4;
  int64_t n = 64;
  int64_t size = 64;
  bool conflict = false;
  uint64_t seed = kDefaultSeed;
};

struct ParamsArgs {
  std::string config = "default";
};

struct CompareArgs {
  std::vector<std::string> reports;
  double margin = 1.0;
};

void banner(std::ostream& out, const std::string& verb, const std::string& body) {
  out << "# effective config (" << verb << ")\n" << body;
  if (!body.empty() && body.back() != '\n') out << '\n';
  out << "# end config\n";
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// --- verbs ------------------------------------------------------------------

int do_train(const TrainArgs& a, bool as_json, std::ostream& out) {
  auto config = resolve_config(a.config);
  const auto paradigm = parse_paradigm(a.paradigm);
  config.train.paradigm = paradigm;
  if (a.seed) config.train.seed = *a.seed;
  if (a.fold) config.train.fold = *a.fold;
  if (a.epochs) config.train.epochs = *a.epochs;
  if (a.max_steps) config.train.max_steps = *a.max_steps;
  config.model = config_for_paradigm(config.model, paradigm);
  config.train.validate(config.model);
  if (!as_json) banner(out, "train", serialize_config(config) + "data=" + a.data + "\nout=" + a.out + "\n");

  const auto datasets = load_datasets(a.data, config.model.image_size, config.train.seed);
  if (paradigm != Paradigm::kSeparate) config.model.num_domains = static_cast<int64_t>(datasets.size());

  TrainOptions options;
  options.out_dir = a.out;
  options.log_epochs = !as_json;
  const auto result = train(paradigm, datasets, config.model, config.train, options);

  std::vector<EvalTarget> targets;
  for (const auto& m : result.models) targets.push_back({m.model.universal, m.domain});
  auto report = evaluate(targets, datasets, static_cast<int>(config.train.fold),
                         std::string(paradigm_name(paradigm)));
  report.parameter_count = result.report.inference_parameters;
  write_report(report, a.out);

  if (as_json) {
    json j;
    j["config"] = serialize_config(config);
    j["paradigm"] = paradigm_name(paradigm);
    j["training_parameters"] = result.report.training_parameters;
    j["inference_parameters"] = result.report.inference_parameters;
    std::vector<std::string> ckpts;
    for (const auto& p : result.report.checkpoints) ckpts.push_back(p.string());
    j["checkpoints"] = ckpts;
    j["report"] = json::parse(report_to_json(report));
    out << j.dump() << '\n';
  } else {
    out << format_report_table({report});
    out << "checkpoints:";
    for (const auto& p : result.report.checkpoints) out << ' ' << p.string();
    out << "\nreport written to " << a.out << '\n';
  }
  return kExitOk;
}

int do_eval(const EvalArgs& a, bool as_json, std::ostream& out) {
  std::vector<LoadedCheckpoint> loaded;
  for (const auto& path : a.ckpts) loaded.push_back(load_checkpoint(path));
  const auto& first = loaded.front().info.config;
  for (const auto& l : loaded) {
    if (l.info.config.model.image_size != first.model.image_size ||
        l.info.config.train.seed != first.train.seed) {
      throw ContractError("checkpoints disagree on image size or data seed");
    }
  }
  std::string paradigm = a.paradigm;
  if (paradigm.empty()) {
    if (first.model.da_enabled) paradigm = "mat";
    else paradigm = loaded.front().info.trained_domain ? "st" : "jt";
  }
  if (!as_json) {
    std::string extra = "fold=" + std::to_string(a.fold) + "\ndata=" + a.data + "\nout=" + a.out + "\nckpt=";
    for (const auto& c : a.ckpts) extra += c + " ";
    banner(out, "eval", serialize_config(first) + extra + "\n");
  }

  const auto datasets = load_datasets(a.data, first.model.image_size, first.train.seed);
  std::vector<EvalTarget> targets;
  int64_t params = 0;
  for (auto& l : loaded) {
    const auto& mc = l.info.config.model;
    if (mc.da_enabled && mc.num_domains != static_cast<int64_t>(datasets.size())) {
      throw ContractError("checkpoint expects " + std::to_string(mc.num_domains) +
                          " domains, data has " + std::to_string(datasets.size()));
    }
    params += l.model.count_parameters(ParameterRole::kInference);
    targets.push_back({l.model.universal, l.info.trained_domain});
  }
  auto report = evaluate(targets, datasets, a.fold, paradigm);
  report.parameter_count = params;
  if (!a.out.empty()) write_report(report, a.out);
  if (as_json) out << report_to_json(report) << '\n';
  else out << format_report_table({report});
  return kExitOk;
}

int do_synth(const SynthArgs& a, bool as_json, std::ostream& out) {
  if (!as_json) {
    banner(out, "synth",
           fmt::format("out={}\ndomains={}\nn={}\nsize={}\nconflict={}\nseed={}\n", a.out, a.domains,
                       a.n, a.size, a.conflict, a.seed));
  }
  const auto datasets = make_synthetic(a.domains, a.n, a.size, a.conflict, a.seed);
  json j = json::array();
  for (const auto& ds : datasets) {
    const auto dir = std::filesystem::path(a.out) / ds.name;
    write_domain(ds, dir);
    j.push_back({{"name", ds.name}, {"dir", dir.string()}, {"images", ds.samples.size()}});
    if (!as_json) out << fmt::format("{}: {} pairs -> {}\n", ds.name, ds.samples.size(), dir.string());
  }
  if (as_json) out << j.dump() << '\n';
  return kExitOk;
}

int do_params(const ParamsArgs& a, bool as_json, std::ostream& out) {
  const auto config = resolve_config(a.config);
  if (!as_json) banner(out, "params", serialize_config(config));
  const Model base(config_for_paradigm(config.model, Paradigm::kSeparate), 0);
  const Model mdvit(config_for_paradigm(config.model, Paradigm::kMultiDomainAdaptive), 0);
  const auto rows = std::vector<std::pair<std::string, int64_t>>{
      {"base_inference", base.count_parameters(ParameterRole::kInference)},
      {"mdvit_universal", mdvit.count_parameters(ParameterRole::kUniversal)},
      {"mdvit_per_peer", mdvit.count_parameters(ParameterRole::kPeer)},
      {"mdvit_training_total", mdvit.count_parameters(ParameterRole::kTrainingTotal)},
      {"mdvit_inference", mdvit.count_parameters(ParameterRole::kInference)},
  };
  if (as_json) {
    json j;
    for (const auto& [k, v] : rows) j[k] = v;
    j["num_domains"] = config.model.num_domains;
    out << j.dump() << '\n';
  } else {
    out << fmt::format("{:<22} {:>12} {:>9}\n", "model", "params", "millions");
    for (const auto& [k, v] : rows) {
      out << fmt::format("{:<22} {:>12} {:>8.2f}M\n", k, v, static_cast<double>(v) / 1e6);
    }
  }
  return kExitOk;
}

int do_compare(const CompareArgs& a, bool as_json, std::ostream& out) {
  std::vector<EvalReport> reports;
  for (const auto& path : a.reports) reports.push_back(report_from_json(read_file(path)));
  const auto cmp = compare_paradigms(reports, a.margin);
  if (as_json) {
    json flags = json::array();
    for (const auto& f : cmp.flags) {
      flags.push_back({{"paradigm", f.paradigm},
                       {"domain", f.domain},
                       {"domain_name", f.domain_name},
                       {"st_dice", f.separate_dice},
                       {"dice", f.paradigm_dice}});
    }
    out << json{{"margin", a.margin}, {"nkt", flags}}.dump() << '\n';
  } else {
    banner(out, "compare", fmt::format("margin={}\n", a.margin));
    out << cmp.table;
  }
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-domain ViT segmentation: train, evaluate and audit models", "mdvit"};
  app.require_subcommand(1);
  bool as_json = false;
  app.add_flag("--json", as_json, "Machine-readable output on stdout");

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "Train with the st, jt or mat paradigm");
  train_cmd->add_option("--config", ta.config, "Config file or 'default'");
  train_cmd->add_option("--data", ta.data, "Root with one subdirectory per domain")->required();
  train_cmd->add_option("--paradigm", ta.paradigm, "st | jt | mat")
      ->required()
      ->check(CLI::IsMember({"st", "jt", "mat"}));
  train_cmd->add_option("--out", ta.out, "Output directory")->required();
  train_cmd->add_option("--seed", ta.seed, "Overrides the config seed");
  train_cmd->add_option("--fold", ta.fold, "Held-out fold")->check(CLI::Range(0, kNumFolds - 1));
  train_cmd->add_option("--epochs", ta.epochs)->check(CLI::PositiveNumber);
  train_cmd->add_option("--max-steps", ta.max_steps)->check(CLI::NonNegativeNumber);

  EvalArgs ea;
  auto* eval_cmd = app.add_subcommand("eval", "Score checkpoints on a fold's test split");
  eval_cmd->add_option("--ckpt", ea.ckpts, "Inference checkpoint(s); one per domain for st")
      ->required();
  eval_cmd->add_option("--data", ea.data)->required();
  eval_cmd->add_option("--fold", ea.fold)->check(CLI::Range(0, kNumFolds - 1));
  eval_cmd->add_option("--out", ea.out, "Directory for report.{csv,txt,json}");
  eval_cmd->add_option("--paradigm", ea.paradigm, "Report tag; inferred when absent");

  SynthArgs sa;
  auto* synth_cmd = app.add_subcommand("synth", "Write the synthetic multi-domain benchmark");
  synth_cmd->add_option("--out", sa.out)->required();
  synth_cmd->add_option("--domains", sa.domains)->check(CLI::Range(1, 64));
  synth_cmd->add_option("--n", sa.n, "Images per domain")->check(CLI::PositiveNumber);
  synth_cmd->add_option("--size", sa.size)->check(CLI::Range(8, 4096));
  synth_cmd->add_flag("--conflict", sa.conflict, "Odd domains label the ring around the blob");
  synth_cmd->add_option("--seed", sa.seed);

  ParamsArgs pa;
  auto* params_cmd = app.add_subcommand("params", "Parameter audit");
  params_cmd->add_option("--config", pa.config, "Config file or 'default'");

  CompareArgs ca;
  auto* compare_cmd = app.add_subcommand("compare", "Side-by-side reports with NKT flags");
  compare_cmd->add_option("--reports", ca.reports, "report.json files")->required();
  compare_cmd->add_option("--margin", ca.margin, "Dice points below st that count as NKT")
      ->check(CLI::NonNegativeNumber);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    const auto* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    err << sub->help();
    return kExitUsage;
  }

  try {
    if (*train_cmd) return do_train(ta, as_json, out);
    if (*eval_cmd) return do_eval(ea, as_json, out);
    if (*synth_cmd) return do_synth(sa, as_json, out);
    if (*params_cmd) return do_params(pa, as_json, out);
    if (*compare_cmd) return do_compare(ca, as_json, out);
  } catch (const ParseError& e) {
    err << "parse error: " << e.what() << '\n';
  } catch (const ValidationError& e) {
    err << "validation error: " << e.what() << '\n';
  } catch (const ContractError& e) {
    err << "contract error: " << e.what() << '\n';
  } catch (const ShapeError& e) {
    err << "shape error: " << e.what() << '\n';
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
  }
  return kExitRuntime;
}

}  // namespace mdvit::cli
