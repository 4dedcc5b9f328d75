// Copyright 2026 The MoMent Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// moment: generate synthetic graphs, train, evaluate and run the self-checks.
//
// Exit codes: 0 success, 1 validation error, 2 runtime failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "moment/checks.hpp"
#include "moment/common.hpp"
#include "moment/config.hpp"
#include "moment/graph_store.hpp"
#include "moment/metrics.hpp"
#include "moment/synth.hpp"
#include "moment/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace moment;

namespace {

struct Options {
  std::string config_path;
  std::string data_dir;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::string variant;
  std::string model_path;
  std::string kde_mode = "orig";
  std::size_t trials = 50;
};

config::RunConfig load_config(const Options& opt) {
  config::RunConfig cfg = opt.config_path.empty() ? config::RunConfig{} : config::load_run_config(opt.config_path);
  if (opt.seed) cfg.set_seed(*opt.seed);
  if (!opt.variant.empty()) cfg.train.variant = train::parse_variant(opt.variant);
  cfg.validate();
  return cfg;
}

std::vector<fs::path> dataset_files(const fs::path& dir) {
  return {dir / "edges.csv", dir / "node_feat.fbin", dir / "edge_feat.fbin"};
}

graph::DyTagDataset load_data(const Options& opt) {
  if (opt.data_dir.empty()) throw ValidationError("--data is required");
  const auto files = dataset_files(opt.data_dir);
  return graph::load_dataset(files[0], files[1], files[2]);
}

fs::path require_out(const Options& opt) {
  if (opt.out_dir.empty()) throw ValidationError("--out is required");
  fs::create_directories(opt.out_dir);
  return opt.out_dir;
}

std::string input_hash(const Options& opt) {
  std::vector<fs::path> files;
  if (!opt.config_path.empty()) files.emplace_back(opt.config_path);
  if (!opt.data_dir.empty()) {
    for (const auto& f : dataset_files(opt.data_dir)) files.push_back(f);
  }
  return config::content_hash(files);
}

json report_header(const std::string& command, const config::RunConfig& cfg, const Options& opt) {
  return json{{"command", command},
              {"seed", cfg.seed},
              {"config", cfg.source},
              {"effective_config", config::effective_config(cfg)},
              {"input_hash", input_hash(opt)}};
}

json link_json(const train::LinkReport& r) {
  json j;
  j["transductive"] = {{"events", r.transductive.events}, {"auc", r.transductive.auc}, {"ap", r.transductive.ap}};
  if (r.inductive) {
    j["inductive"] = {{"events", r.inductive->events}, {"auc", r.inductive->auc}, {"ap", r.inductive->ap}};
  } else {
    j["inductive"] = {{"status", "no test event touches an inductive node"}};
  }
  j["leakage"] = {{"queries", r.audit.queries}, {"returned", r.audit.returned}, {"violations", r.audit.violations}};
  return j;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw RuntimeFailure("cannot open " + path.string() + " for writing");
  os << j.dump(2) << '\n';
}

double history_spearman(const std::vector<train::EpochRecord>& history) {
  std::vector<double> align, dev;
  for (const auto& r : history) {
    align.push_back(r.align_loss);
    dev.push_back(r.dev_auc);
  }
  return metrics::spearman(align, dev);
}

void check_widths(const config::RunConfig& cfg, const graph::DyTagDataset& ds) {
  const json& enc = cfg.source.contains("encoder") ? cfg.source["encoder"] : json::object();
  if (enc.contains("d_node_feat") && cfg.train.encoder.d_node_feat != ds.node_features.cols) {
    throw ValidationError("encoder.d_node_feat does not match the node feature width of the data");
  }
  if (enc.contains("d_edge_feat") && cfg.train.encoder.d_edge_feat != ds.edge_features.cols) {
    throw ValidationError("encoder.d_edge_feat does not match the edge feature width of the data");
  }
}

int cmd_gen_synth(const Options& opt) {
  const config::RunConfig cfg = load_config(opt);
  const fs::path out = require_out(opt);
  const synth::SynthOutput gen = synth::generate(cfg.synth);
  graph::save_dataset(out, gen.dataset);
  synth::write_truth_json(out / "truth.json", gen.truth);
  std::printf("wrote %zu events over %zu nodes to %s\n", gen.dataset.events.size(), gen.dataset.num_nodes,
              out.string().c_str());
  return 0;
}

int cmd_train(const Options& opt) {
  const config::RunConfig cfg = load_config(opt);
  const graph::DyTagDataset ds = load_data(opt);
  check_widths(cfg, ds);
  const fs::path out = require_out(opt);
  const graph::SplitView split = graph::chronological_split(ds, cfg.split_ratios);
  const graph::NeighborIndex index(ds.events, ds.num_nodes);

  train::MomentModel model(cfg.train, ds.node_features.cols, ds.edge_features.cols);
  const train::TrainResult result = train::train(model, ds, split);
  model.save(out / "model.bin");
  train::write_history_csv(out / "history.csv", result.history);

  json report = report_header("train", cfg, opt);
  report["training"] = {{"epochs_run", result.history.size()},
                        {"best_epoch", result.best_epoch},
                        {"best_dev_auc", result.best_dev_auc},
                        {"spearman_align_dev", history_spearman(result.history)}};
  report["test"] = link_json(train::evaluate_range(model, ds, index, split, split.test));
  if (cfg.edge_class_epochs > 0 && ds.num_classes >= 2) {
    const train::EdgeClassReport ec = train::evaluate_edge_classification(model, ds, split, cfg.edge_class_epochs);
    report["edge_classification"] = {{"events", ec.events}, {"weighted_precision", ec.weighted_precision}};
  }
  write_json(out / "report.json", report);
  std::printf("trained %zu epochs (best %zu, dev auc %.4f)\n", result.history.size(), result.best_epoch,
              result.best_dev_auc);
  return 0;
}

int cmd_eval(const Options& opt) {
  const config::RunConfig cfg = load_config(opt);
  const graph::DyTagDataset ds = load_data(opt);
  check_widths(cfg, ds);
  const fs::path out = require_out(opt);
  const fs::path model_path = opt.model_path.empty() ? out / "model.bin" : fs::path(opt.model_path);
  const graph::SplitView split = graph::chronological_split(ds, cfg.split_ratios);
  const graph::NeighborIndex index(ds.events, ds.num_nodes);
  train::MomentModel model(cfg.train, ds.node_features.cols, ds.edge_features.cols);
  model.load(model_path);
  json report = report_header("eval", cfg, opt);
  report["test"] = link_json(train::evaluate_range(model, ds, index, split, split.test));
  write_json(out / "eval.json", report);
  std::printf("%s\n", report["test"].dump().c_str());
  return 0;
}

int cmd_ablate(const Options& opt) {
  const config::RunConfig cfg = load_config(opt);
  const graph::DyTagDataset ds = load_data(opt);
  check_widths(cfg, ds);
  const fs::path out = require_out(opt);
  const graph::SplitView split = graph::chronological_split(ds, cfg.split_ratios);
  const std::vector<train::Variant> variants = train::all_variants();
  const auto results = train::run_ablation(ds, split, cfg.train, variants);

  std::ofstream csv(out / "ablation.csv", std::ios::binary);
  csv << "variant,transductive_auc,transductive_ap,inductive_auc,inductive_ap,best_epoch\n";
  json rows = json::array();
  for (const auto& r : results) {
    const std::string ind_auc = r.link.inductive ? json(r.link.inductive->auc).dump() : "";
    const std::string ind_ap = r.link.inductive ? json(r.link.inductive->ap).dump() : "";
    csv << train::variant_name(r.variant) << ',' << json(r.link.transductive.auc).dump() << ','
        << json(r.link.transductive.ap).dump() << ',' << ind_auc << ',' << ind_ap << ',' << r.training.best_epoch
        << '\n';
    json row = link_json(r.link);
    row["variant"] = train::variant_name(r.variant);
    row["best_epoch"] = r.training.best_epoch;
    rows.push_back(row);
    std::printf("%-16s inductive auc %s\n", train::variant_name(r.variant).c_str(), ind_auc.c_str());
  }
  json report = report_header("ablate", cfg, opt);
  report["variants"] = rows;
  write_json(out / "report.json", report);
  return 0;
}

int cmd_alpha_sweep(const Options& opt) {
  const config::RunConfig cfg = load_config(opt);
  const graph::DyTagDataset ds = load_data(opt);
  check_widths(cfg, ds);
  const fs::path out = require_out(opt);
  const graph::SplitView split = graph::chronological_split(ds, cfg.split_ratios);
  const auto points = train::run_alpha_sweep(ds, split, cfg.train, cfg.alphas);
  std::ofstream csv(out / "alpha_sweep.csv", std::ios::binary);
  csv << "alpha,inductive_auc\n";
  json rows = json::array();
  for (const auto& p : points) {
    csv << json(p.alpha).dump() << ',' << json(p.inductive_auc).dump() << '\n';
    rows.push_back({{"alpha", p.alpha}, {"inductive_auc", p.inductive_auc}});
    std::printf("alpha %.2f inductive auc %.4f\n", p.alpha, p.inductive_auc);
  }
  json report = report_header("alpha-sweep", cfg, opt);
  report["points"] = rows;
  write_json(out / "report.json", report);
  return 0;
}

int cmd_grad_check(const Options& opt) {
  const std::uint64_t seed = opt.seed.value_or(7);
  const checks::GradCheckResult r = checks::grad_check_full_model(seed);
  std::printf("entries %zu loss %.6f max relative error %.3e (%.2fs)\n", r.entries, r.loss, r.max_rel_error,
              r.seconds);
  if (!(r.max_rel_error < 1e-5)) {
    std::fprintf(stderr, "gradient check failed\n");
    return 2;
  }
  return 0;
}

int cmd_mi_check(const Options& opt) {
  const checks::MiCheckResult r = checks::mi_check(opt.trials, opt.seed.value_or(7));
  std::printf("trials %zu max |lhs - rhs| %.3e max relabel gap %.3e\n", r.trials, r.max_chain_gap,
              r.max_relabel_gap);
  if (!(r.max_chain_gap < 1e-10 && r.max_relabel_gap < 1e-10)) {
    std::fprintf(stderr, "chain rule check failed\n");
    return 2;
  }
  return 0;
}

int cmd_analyze_kde(const Options& opt) {
  const config::RunConfig cfg = load_config(opt);
  const graph::DyTagDataset ds = load_data(opt);
  check_widths(cfg, ds);
  const fs::path out = require_out(opt);
  const graph::SplitView split = graph::chronological_split(ds, cfg.split_ratios);
  std::map<std::string, std::vector<double>> pops;
  if (opt.kde_mode == "orig") {
    pops = synth::original_populations(ds, split.test, cfg.train.encoder);
  } else if (opt.kde_mode == "token") {
    if (opt.model_path.empty()) throw ValidationError("token mode needs trained parameters via --model");
    train::MomentModel model(cfg.train, ds.node_features.cols, ds.edge_features.cols);
    model.load(opt.model_path);
    pops = synth::token_populations(model, ds, split.test);
  } else {
    throw ValidationError("--mode must be 'orig' or 'token'");
  }
  const auto curves = synth::export_modality_distributions(pops, opt.kde_mode, out, cfg.kde_grid_points);
  for (const auto& [name, curve] : curves) {
    std::printf("kde_%s_%s.csv bandwidth %.4g\n", name.c_str(), opt.kde_mode.c_str(), curve.bandwidth);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MoMent dynamic text-attributed graph toolkit"};
  app.require_subcommand(1);
  Options opt;

  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config_path, "Run configuration JSON")->check(CLI::ExistingFile);
    sub->add_option("--seed", opt.seed, "Override the run seed");
  };
  const auto add_data = [&](CLI::App* sub) { sub->add_option("--data", opt.data_dir, "Dataset directory"); };
  const auto add_out = [&](CLI::App* sub) { sub->add_option("--out", opt.out_dir, "Output directory"); };
  const auto add_variant = [&](CLI::App* sub) {
    sub->add_option("--variant", opt.variant, "Ablation variant");
  };

  CLI::App* gen = app.add_subcommand("gen-synth", "Generate a synthetic dataset");
  add_common(gen);
  add_out(gen);
  CLI::App* tr = app.add_subcommand("train", "Train and evaluate one model");
  add_common(tr);
  add_data(tr);
  add_out(tr);
  add_variant(tr);
  CLI::App* ev = app.add_subcommand("eval", "Evaluate saved parameters on the test range");
  add_common(ev);
  add_data(ev);
  add_out(ev);
  add_variant(ev);
  ev->add_option("--model", opt.model_path, "Parameter file (default <out>/model.bin)");
  CLI::App* ab = app.add_subcommand("ablate", "Train the full model and six ablations");
  add_common(ab);
  add_data(ab);
  add_out(ab);
  CLI::App* sw = app.add_subcommand("alpha-sweep", "Inductive AUC across alignment weights");
  add_common(sw);
  add_data(sw);
  add_out(sw);
  add_variant(sw);
  CLI::App* gc = app.add_subcommand("grad-check", "Finite-difference check of the full training loss");
  gc->add_option("--seed", opt.seed, "Seed for the tiny batch");
  CLI::App* mi = app.add_subcommand("mi-check", "Mutual information chain rule on random joints");
  mi->add_option("--trials", opt.trials, "Number of random joints");
  mi->add_option("--seed", opt.seed, "Seed");
  CLI::App* kd = app.add_subcommand("analyze-kde", "Export modality density curves");
  add_common(kd);
  add_data(kd);
  add_out(kd);
  add_variant(kd);
  kd->add_option("--mode", opt.kde_mode, "orig or token");
  kd->add_option("--model", opt.model_path, "Parameter file for token mode");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (gen->parsed()) return cmd_gen_synth(opt);
    if (tr->parsed()) return cmd_train(opt);
    if (ev->parsed()) return cmd_eval(opt);
    if (ab->parsed()) return cmd_ablate(opt);
    if (sw->parsed()) return cmd_alpha_sweep(opt);
    if (gc->parsed()) return cmd_grad_check(opt);
    if (mi->parsed()) return cmd_mi_check(opt);
    if (kd->parsed()) return cmd_analyze_kde(opt);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "runtime failure: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
