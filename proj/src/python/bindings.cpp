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


#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "moment/checks.hpp"
#include "moment/config.hpp"
#include "moment/fusion_loss.hpp"
#include "moment/graph_store.hpp"
#include "moment/metrics.hpp"
#include "moment/synth.hpp"
#include "moment/trainer.hpp"

namespace py = pybind11;
namespace fs = std::filesystem;
using namespace moment;

namespace {

config::RunConfig parse(const std::string& config_json) {
  return config::parse_run_config(config_json.empty() ? nlohmann::json::object()
                                                      : nlohmann::json::parse(config_json));
}

graph::DyTagDataset load_dir(const std::string& dir) {
  const fs::path d(dir);
  return graph::load_dataset(d / "edges.csv", d / "node_feat.fbin", d / "edge_feat.fbin");
}

py::dict link_dict(const train::LinkMetrics& m) {
  py::dict d;
  d["events"] = m.events;
  d["auc"] = m.auc;
  d["ap"] = m.ap;
  return d;
}

py::dict generate_synth(const std::string& config_json, const std::string& out_dir) {
  const config::RunConfig cfg = parse(config_json);
  const synth::SynthOutput gen = synth::generate(cfg.synth);
  graph::save_dataset(out_dir, gen.dataset);
  synth::write_truth_json(fs::path(out_dir) / "truth.json", gen.truth);
  py::dict d;
  d["events"] = gen.dataset.events.size();
  d["nodes"] = gen.dataset.num_nodes;
  d["horizon"] = gen.truth.horizon;
  return d;
}

py::dict train_run(const std::string& config_json, const std::string& data_dir, const std::string& out_dir) {
  const config::RunConfig cfg = parse(config_json);
  const graph::DyTagDataset ds = load_dir(data_dir);
  const graph::SplitView split = graph::chronological_split(ds, cfg.split_ratios);
  train::MomentModel model(cfg.train, ds.node_features.cols, ds.edge_features.cols);
  train::TrainResult result;
  {
    py::gil_scoped_release release;
    result = train::train(model, ds, split);
  }
  fs::create_directories(out_dir);
  model.save(fs::path(out_dir) / "model.bin");
  train::write_history_csv(fs::path(out_dir) / "history.csv", result.history);
  const graph::NeighborIndex index(ds.events, ds.num_nodes);
  const train::LinkReport rep = train::evaluate_range(model, ds, index, split, split.test);

  py::list history;
  for (const auto& r : result.history) {
    py::dict e;
    e["epoch"] = r.epoch;
    e["train_loss"] = r.train_loss;
    e["align_loss"] = r.align_loss;
    e["dev_auc"] = r.dev_auc;
    history.append(e);
  }
  py::dict d;
  d["history"] = history;
  d["best_epoch"] = result.best_epoch;
  d["transductive"] = link_dict(rep.transductive);
  d["inductive"] = rep.inductive ? py::object(link_dict(*rep.inductive)) : py::none();
  d["leakage_violations"] = rep.audit.violations;
  return d;
}

py::dict mi_chain(const std::vector<double>& p, std::size_t n_s, std::size_t n_pi, std::size_t n_y,
                  const std::vector<std::size_t>& relabel) {
  const fusion::MiChainResult r = fusion::mi_chain_check({n_s, n_pi, n_y, p}, relabel);
  py::dict d;
  d["lhs"] = r.lhs;
  d["rhs"] = r.rhs;
  d["structural_term"] = r.structural_term;
  d["conditional_term"] = r.conditional_term;
  d["relabeled_conditional"] = r.relabeled_conditional;
  return d;
}

}  // namespace

PYBIND11_MODULE(_moment, m) {
  m.doc() = "MoMent dynamic text-attributed graph toolkit";

  m.def("auc", [](const std::vector<double>& s, const std::vector<int>& y) { return metrics::auc(s, y); },
        py::arg("scores"), py::arg("labels"));
  m.def("average_precision",
        [](const std::vector<double>& s, const std::vector<int>& y) { return metrics::average_precision(s, y); },
        py::arg("scores"), py::arg("labels"));
  m.def("spearman", [](const std::vector<double>& a, const std::vector<double>& b) { return metrics::spearman(a, b); });

  m.def(
      "kde",
      [](const std::vector<double>& values, std::size_t grid_points) {
        const synth::KdeCurve c = synth::kde(values, grid_points);
        return py::make_tuple(c.grid, c.density, c.bandwidth);
      },
      py::arg("values"), py::arg("grid_points") = 512, "Returns (grid, density, bandwidth).");
  m.def(
      "overlap_coefficient",
      [](const std::vector<double>& a, const std::vector<double>& b, std::size_t grid_points) {
        return synth::overlap_coefficient(a, b, grid_points);
      },
      py::arg("a"), py::arg("b"), py::arg("grid_points") = 512);

  m.def("mi_chain", &mi_chain, py::arg("p"), py::arg("n_s"), py::arg("n_pi"), py::arg("n_y"),
        py::arg("relabel") = std::vector<std::size_t>{},
        "Chain-rule terms in nats for a joint over (zs, zpi, y), y fastest.");
  m.def(
      "mi_check",
      [](std::size_t trials, std::uint64_t seed) {
        const checks::MiCheckResult r = checks::mi_check(trials, seed);
        return py::make_tuple(r.max_chain_gap, r.max_relabel_gap);
      },
      py::arg("trials") = 50, py::arg("seed") = 7);
  m.def(
      "grad_check",
      [](std::uint64_t seed) {
        const checks::GradCheckResult r = checks::grad_check_full_model(seed);
        py::dict d;
        d["entries"] = r.entries;
        d["max_rel_error"] = r.max_rel_error;
        d["loss"] = r.loss;
        return d;
      },
      py::arg("seed") = 7);

  m.def(
      "effective_config",
      [](const std::string& config_json) { return config::effective_config(parse(config_json)).dump(); },
      py::arg("config_json") = "");
  m.def("generate_synth", &generate_synth, py::arg("config_json"), py::arg("out_dir"));
  m.def("train", &train_run, py::arg("config_json"), py::arg("data_dir"), py::arg("out_dir"));
}
