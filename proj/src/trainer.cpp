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

#include "moment/trainer.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "moment/metrics.hpp"

namespace moment::train {

namespace {

constexpr std::array<std::pair<Variant, const char*>, 7> kVariantNames = {{
    {Variant::kFull, "full"},
    {Variant::kNoTemporal, "no_temporal"},
    {Variant::kNoTextual, "no_textual"},
    {Variant::kStructuralOnly, "structural_only"},
    {Variant::kNoAlignD, "no_align_d"},
    {Variant::kNoAlignI, "no_align_i"},
    {Variant::kNoAlign, "no_align"},
}};

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

Variant parse_variant(const std::string& name) {
  for (const auto& [v, n] : kVariantNames) {
    if (name == n) return v;
  }
  throw ValidationError("unknown ablation variant '" + name + "'");
}

std::string variant_name(Variant v) {
  for (const auto& [value, n] : kVariantNames) {
    if (value == v) return n;
  }
  return "unknown";
}

std::vector<Variant> all_variants() {
  std::vector<Variant> out;
  for (const auto& entry : kVariantNames) out.push_back(entry.first);
  return out;
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw ValidationError("batch_size must be positive");
  if (patience == 0) throw ValidationError("patience must be positive");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ValidationError("lr must be positive");
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ValidationError("alpha must be non-negative");
  if (decoder_hidden == 0) throw ValidationError("decoder_hidden must be positive");
  encoder.validate();
}

// ---------------------------------------------------------------------------

MomentModel::MomentModel(const TrainConfig& config, std::size_t d_node_feat, std::size_t d_edge_feat)
    : config_(config) {
  config_.encoder.d_node_feat = d_node_feat;
  config_.encoder.d_edge_feat = d_edge_feat;
  config_.validate();
  const nn::InitContext init{config_.seed, ""};
  textual_ = nn::TextualEncoder(init, config_.encoder);
  temporal_ = nn::TemporalEncoder(init, config_.encoder);
  structural_ = nn::StructuralEncoder(init, config_.encoder);
  fusion_ = fusion::FusionParams(init, config_.encoder.d_internal, config_.encoder.d_struct);
  link_decoder_ = fusion::PairDecoder(init, "link_decoder", config_.encoder.d_struct, config_.decoder_hidden, 1);
  if (config_.variant == Variant::kNoTemporal) {
    fusion_.gamma().value.fill(0.0);
    fusion_.gamma().frozen = true;
  }
  if (config_.variant == Variant::kStructuralOnly) {
    fusion_.beta().value.fill(0.0);
    fusion_.beta().frozen = true;
  }
}

fusion::LossConfig MomentModel::loss_config() const {
  fusion::LossConfig lc;
  lc.alpha = config_.alpha;
  switch (config_.variant) {
    case Variant::kStructuralOnly:
    case Variant::kNoAlign:
      lc.use_distribution = false;
      lc.use_instance = false;
      break;
    case Variant::kNoAlignD:
      lc.use_distribution = false;
      break;
    case Variant::kNoAlignI:
      lc.use_instance = false;
      break;
    default:
      break;
  }
  return lc;
}

fusion::ModalityTokens MomentModel::encode(Tape& tape, const GraphContext& ctx,
                                           std::span<const NodeId> nodes, std::span<const double> times,
                                           graph::LeakageAudit* audit) {
  if (nodes.size() != times.size()) throw ValidationError("encode: nodes and times differ in length");
  const nn::EncoderConfig& ec = config_.encoder;
  const std::size_t b = nodes.size();
  fusion::ModalityTokens tokens;
  if (config_.variant == Variant::kNoTextual) {
    tokens.zx = tape.constant(Tensor(b, ec.d_internal));
  } else {
    tokens.zx = textual_.forward(tape, nn::gather_rows(ctx.dataset->node_features, nodes));
  }
  if (config_.variant == Variant::kNoTemporal) {
    tokens.ztau = tape.constant(Tensor(b, ec.d_internal));
  } else {
    tokens.ztau = temporal_.forward(tape, nn::build_temporal_input(*ctx.index, nodes, times, ec, audit));
  }
  tokens.zs = structural_.forward(
      tape, nn::build_structural_input(*ctx.index, ctx.dataset->edge_features, nodes, times, ec, audit));
  fusion::fuse(tape, tokens, fusion_);
  return tokens;
}

std::vector<Param*> MomentModel::params() {
  std::vector<Param*> out;
  textual_.collect(out);
  temporal_.collect(out);
  structural_.collect(out);
  fusion_.collect(out);
  link_decoder_.collect(out);
  return out;
}

std::vector<Tensor> MomentModel::snapshot() {
  std::vector<Tensor> out;
  for (Param* p : params()) out.push_back(p->value);
  return out;
}

void MomentModel::restore(const std::vector<Tensor>& values) {
  const std::vector<Param*> ps = params();
  if (ps.size() != values.size()) throw ValidationError("restore: parameter count mismatch");
  for (std::size_t i = 0; i < ps.size(); ++i) {
    if (!ps[i]->value.same_shape(values[i])) throw ValidationError("restore: shape mismatch for " + ps[i]->name);
    ps[i]->value = values[i];
  }
}

namespace {

constexpr char kModelMagic[4] = {'D', 'Y', 'T', 'M'};
constexpr std::uint32_t kModelVersion = 1;

template <typename T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T take(std::istream& is, const std::filesystem::path& path) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!is) throw ValidationError(path.string() + ": truncated model file");
  return v;
}

}  // namespace

void MomentModel::save(const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw RuntimeFailure("cannot open " + path.string() + " for writing");
  os.write(kModelMagic, 4);
  put(os, kModelVersion);
  const std::vector<Param*> ps = params();
  put(os, static_cast<std::uint64_t>(ps.size()));
  for (const Param* p : ps) {
    put(os, static_cast<std::uint32_t>(p->name.size()));
    os.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    put(os, static_cast<std::uint64_t>(p->value.rows()));
    put(os, static_cast<std::uint64_t>(p->value.cols()));
    os.write(reinterpret_cast<const char*>(p->value.data().data()),
             static_cast<std::streamsize>(p->value.size() * sizeof(double)));
  }
  if (!os) throw RuntimeFailure("write failed for " + path.string());
}

void MomentModel::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ValidationError("cannot open " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kModelMagic, 4) != 0) throw ValidationError(path.string() + ": bad magic");
  if (take<std::uint32_t>(is, path) != kModelVersion) throw ValidationError(path.string() + ": unsupported version");
  const std::vector<Param*> ps = params();
  if (take<std::uint64_t>(is, path) != ps.size()) throw ValidationError(path.string() + ": parameter count mismatch");
  for (Param* p : ps) {
    std::string name(take<std::uint32_t>(is, path), '\0');
    is.read(name.data(), static_cast<std::streamsize>(name.size()));
    const auto rows = take<std::uint64_t>(is, path);
    const auto cols = take<std::uint64_t>(is, path);
    if (name != p->name || rows != p->value.rows() || cols != p->value.cols()) {
      throw ValidationError(path.string() + ": parameter '" + name + "' does not match model layout");
    }
    is.read(reinterpret_cast<char*>(p->value.data().data()),
            static_cast<std::streamsize>(p->value.size() * sizeof(double)));
    if (!is) throw ValidationError(path.string() + ": truncated model file");
  }
}

// ---------------------------------------------------------------------------

std::vector<NodeId> sample_negatives(std::span<const graph::TemporalEvent> batch, std::size_t num_nodes,
                                     CounterRng& rng) {
  if (num_nodes < 2) throw ValidationError("sample_negatives: need at least two nodes");
  std::vector<NodeId> out;
  out.reserve(batch.size());
  for (const graph::TemporalEvent& e : batch) {
    NodeId v;
    do {
      v = static_cast<NodeId>(rng.below(num_nodes));
    } while (v == e.dst);
    out.push_back(v);
  }
  return out;
}

namespace {

struct BatchColumns {
  std::vector<NodeId> src, dst, neg;
  std::vector<double> t;
};

BatchColumns columns(std::span<const graph::TemporalEvent> batch, std::vector<NodeId> neg) {
  BatchColumns c;
  for (const graph::TemporalEvent& e : batch) {
    c.src.push_back(e.src);
    c.dst.push_back(e.dst);
    c.t.push_back(e.t);
  }
  c.neg = std::move(neg);
  return c;
}

// Sources, destinations and negatives go through the encoders as one batch so
// that the batch-level attention context is shared by positive and negative
// pairs alike.
struct JointTokens {
  fusion::ModalityTokens tokens;
  Var src, dst, neg;
};

JointTokens encode_joint(MomentModel& model, Tape& tape, const GraphContext& ctx, const BatchColumns& c,
                         graph::LeakageAudit* audit = nullptr) {
  const std::size_t b = c.src.size();
  std::vector<NodeId> nodes = c.src;
  nodes.insert(nodes.end(), c.dst.begin(), c.dst.end());
  nodes.insert(nodes.end(), c.neg.begin(), c.neg.end());
  std::vector<double> times;
  const std::size_t groups = nodes.size() / b;
  for (std::size_t g = 0; g < groups; ++g) times.insert(times.end(), c.t.begin(), c.t.end());
  JointTokens j;
  j.tokens = model.encode(tape, ctx, nodes, times, audit);
  j.src = ad::slice_rows(j.tokens.z, 0, b);
  j.dst = ad::slice_rows(j.tokens.z, b, 2 * b);
  if (groups == 3) j.neg = ad::slice_rows(j.tokens.z, 2 * b, 3 * b);
  return j;
}

}  // namespace

BatchLoss batch_loss(MomentModel& model, Tape& tape, const GraphContext& ctx,
                     std::span<const graph::TemporalEvent> batch, std::span<const NodeId> negatives) {
  if (negatives.size() != batch.size()) throw ValidationError("batch_loss: one negative per event required");
  BatchColumns c = columns(batch, std::vector<NodeId>(negatives.begin(), negatives.end()));
  const JointTokens j = encode_joint(model, tape, ctx, c);
  BatchLoss loss;
  loss.task = fusion::bce_link_loss(model.link_logits(tape, j.src, j.dst), model.link_logits(tape, j.src, j.neg));
  loss.dist = fusion::distribution_loss(j.tokens.ztau, j.tokens.zx);
  loss.inst = fusion::instance_loss(j.tokens.zpi, j.tokens.zs);
  loss.total = fusion::total_loss(loss.task, loss.dist, loss.inst, model.loss_config());
  return loss;
}

TrainResult train(MomentModel& model, const graph::DyTagDataset& dataset, const graph::SplitView& split) {
  const TrainConfig& cfg = model.config();
  const graph::NeighborIndex index(dataset.events, dataset.num_nodes);
  const GraphContext ctx{&dataset, &index};
  const std::vector<Param*> params = model.params();
  ad::AdamConfig adam;
  adam.lr = cfg.lr;
  adam.validate();

  TrainResult result;
  std::vector<Tensor> best;
  std::size_t since_best = 0;
  std::uint64_t step = 0;
  const std::span<const graph::TemporalEvent> events(dataset.events);

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    CounterRng neg_rng(cfg.seed, stream_id("train_negatives"), epoch);
    double loss_sum = 0.0, align_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t begin = split.train.begin; begin < split.train.end; begin += cfg.batch_size) {
      const std::size_t end = std::min(begin + cfg.batch_size, split.train.end);
      const auto batch = events.subspan(begin, end - begin);
      const std::vector<NodeId> negatives = sample_negatives(batch, dataset.num_nodes, neg_rng);

      Tape tape(true, cfg.seed, step++);
      try {
        BatchLoss loss = batch_loss(model, tape, ctx, batch, negatives);
        tape.backward(loss.total);
        loss_sum += loss.total.value().item();
        align_sum += loss.dist.value().item() + loss.inst.value().item();
      } catch (const RuntimeFailure& e) {
        throw RuntimeFailure("training diverged at epoch " + std::to_string(epoch) + ", events [" +
                             std::to_string(begin) + ", " + std::to_string(end) + "): " + e.what());
      }
      ad::adam_step(params, adam);
      ++batches;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = batches ? loss_sum / static_cast<double>(batches) : 0.0;
    rec.align_loss = batches ? align_sum / static_cast<double>(batches) : 0.0;
    rec.dev_auc = evaluate_range(model, dataset, index, split, split.val).transductive.auc;
    result.history.push_back(rec);

    if (result.best_epoch == 0 || rec.dev_auc > result.best_dev_auc) {
      result.best_epoch = epoch;
      result.best_dev_auc = rec.dev_auc;
      best = model.snapshot();
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  if (!best.empty()) model.restore(best);
  return result;
}

// ---------------------------------------------------------------------------

LinkReport evaluate_range(MomentModel& model, const graph::DyTagDataset& dataset,
                          const graph::NeighborIndex& index, const graph::SplitView& split,
                          graph::IndexRange range) {
  const TrainConfig& cfg = model.config();
  const GraphContext ctx{&dataset, &index};
  const std::span<const graph::TemporalEvent> events(dataset.events);
  CounterRng neg_rng(cfg.seed, stream_id("eval_negatives"), range.begin);

  LinkReport report;
  std::vector<double>& pos_scores = report.pos_scores;
  std::vector<double>& neg_scores = report.neg_scores;
  std::vector<std::uint8_t>& inductive = report.inductive_mask;
  for (std::size_t begin = range.begin; begin < range.end; begin += cfg.batch_size) {
    const std::size_t end = std::min(begin + cfg.batch_size, range.end);
    const auto batch = events.subspan(begin, end - begin);
    BatchColumns c = columns(batch, sample_negatives(batch, dataset.num_nodes, neg_rng));
    Tape tape(false, cfg.seed, 0, false);
    const JointTokens j = encode_joint(model, tape, ctx, c, &report.audit);
    const Tensor pos = model.link_logits(tape, j.src, j.dst).value();
    const Tensor& negl = model.link_logits(tape, j.src, j.neg).value();
    for (std::size_t i = 0; i < batch.size(); ++i) {
      pos_scores.push_back(pos(i, 0));
      neg_scores.push_back(negl(i, 0));
      inductive.push_back(split.is_inductive(batch[i].src) || split.is_inductive(batch[i].dst));
    }
  }

  const auto metrics_for = [&](bool inductive_only) -> std::optional<LinkMetrics> {
    std::vector<double> scores;
    std::vector<int> labels;
    std::size_t count = 0;
    for (std::size_t i = 0; i < pos_scores.size(); ++i) {
      if (inductive_only && !inductive[i]) continue;
      ++count;
      scores.push_back(pos_scores[i]);
      labels.push_back(1);
      scores.push_back(neg_scores[i]);
      labels.push_back(0);
    }
    if (count == 0) return std::nullopt;
    return LinkMetrics{count, metrics::auc(scores, labels), metrics::average_precision(scores, labels)};
  };
  auto all = metrics_for(false);
  if (!all) throw ValidationError("evaluate: empty event range");
  report.transductive = *all;
  report.inductive = metrics_for(true);
  return report;
}

LinkMetrics evaluate_link(MomentModel& model, const graph::DyTagDataset& dataset,
                          const graph::SplitView& split, EvalMode mode) {
  const graph::NeighborIndex index(dataset.events, dataset.num_nodes);
  LinkReport report = evaluate_range(model, dataset, index, split, split.test);
  if (mode == EvalMode::kTransductive) return report.transductive;
  if (!report.inductive) throw ValidationError("inductive evaluation: no test event touches an inductive node");
  return *report.inductive;
}

EdgeClassReport evaluate_edge_classification(MomentModel& model, const graph::DyTagDataset& dataset,
                                             const graph::SplitView& split, std::size_t epochs) {
  if (dataset.num_classes < 2) throw ValidationError("edge classification needs at least two classes");
  const TrainConfig& cfg = model.config();
  const graph::NeighborIndex index(dataset.events, dataset.num_nodes);
  const GraphContext ctx{&dataset, &index};
  const std::span<const graph::TemporalEvent> events(dataset.events);

  // Frozen embeddings for every event of a range, batch by batch.
  struct Embedded {
    std::vector<Tensor> src, dst;
    std::vector<std::vector<std::size_t>> labels;
  };
  const auto embed = [&](graph::IndexRange range) {
    Embedded out;
    for (std::size_t begin = range.begin; begin < range.end; begin += cfg.batch_size) {
      const std::size_t end = std::min(begin + cfg.batch_size, range.end);
      const auto batch = events.subspan(begin, end - begin);
      BatchColumns c = columns(batch, {});
      Tape tape(false, cfg.seed, 0, false);
      const JointTokens j = encode_joint(model, tape, ctx, c);
      out.src.push_back(j.src.value());
      out.dst.push_back(j.dst.value());
      std::vector<std::size_t> labels;
      for (const graph::TemporalEvent& e : batch) labels.push_back(e.label);
      out.labels.push_back(std::move(labels));
    }
    return out;
  };
  const Embedded train_set = embed(split.train);
  const Embedded test_set = embed(split.test);
  if (test_set.src.empty()) throw ValidationError("edge classification: empty test range");

  fusion::PairDecoder head(nn::InitContext{cfg.seed, ""}, "edge_decoder", cfg.encoder.d_struct,
                           cfg.decoder_hidden, dataset.num_classes);
  std::vector<Param*> head_params;
  head.collect(head_params);
  ad::AdamConfig adam;
  adam.lr = cfg.lr;
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    for (std::size_t b = 0; b < train_set.src.size(); ++b) {
      Tape tape;
      Var logits = head.forward(tape, tape.constant(train_set.src[b]), tape.constant(train_set.dst[b]));
      tape.backward(fusion::cross_entropy(logits, train_set.labels[b]));
      ad::adam_step(head_params, adam);
    }
  }

  std::vector<std::size_t> predicted, truth;
  for (std::size_t b = 0; b < test_set.src.size(); ++b) {
    Tape tape(false, cfg.seed, 0, false);
    const Tensor& logits =
        head.forward(tape, tape.constant(test_set.src[b]), tape.constant(test_set.dst[b])).value();
    for (std::size_t r = 0; r < logits.rows(); ++r) {
      const auto row = logits.row(r);
      predicted.push_back(static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin()));
      truth.push_back(test_set.labels[b][r]);
    }
  }
  return {truth.size(), metrics::weighted_precision(predicted, truth, dataset.num_classes)};
}

// ---------------------------------------------------------------------------

std::vector<VariantResult> run_ablation(const graph::DyTagDataset& dataset, const graph::SplitView& split,
                                        const TrainConfig& base, std::span<const Variant> variants) {
  const graph::NeighborIndex index(dataset.events, dataset.num_nodes);
  std::vector<VariantResult> out;
  for (Variant v : variants) {
    TrainConfig cfg = base;
    cfg.variant = v;
    MomentModel model(cfg, dataset.node_features.cols, dataset.edge_features.cols);
    VariantResult r;
    r.variant = v;
    r.training = train(model, dataset, split);
    r.link = evaluate_range(model, dataset, index, split, split.test);
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<AlphaPoint> run_alpha_sweep(const graph::DyTagDataset& dataset, const graph::SplitView& split,
                                        const TrainConfig& base, std::span<const double> alphas) {
  std::vector<AlphaPoint> out;
  for (double alpha : alphas) {
    TrainConfig cfg = base;
    cfg.alpha = alpha;
    MomentModel model(cfg, dataset.node_features.cols, dataset.edge_features.cols);
    train(model, dataset, split);
    out.push_back({alpha, evaluate_link(model, dataset, split, EvalMode::kInductive).auc});
  }
  return out;
}

// ---------------------------------------------------------------------------

void write_history_csv(const std::filesystem::path& path, std::span<const EpochRecord> history) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw RuntimeFailure("cannot open " + path.string() + " for writing");
  os << "epoch,train_loss,align_loss,dev_auc\n";
  for (const EpochRecord& r : history) {
    os << r.epoch << ',' << format_double(r.train_loss) << ',' << format_double(r.align_loss) << ','
       << format_double(r.dev_auc) << '\n';
  }
  if (!os) throw RuntimeFailure("write failed for " + path.string());
}

std::vector<EpochRecord> read_history_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ValidationError("cannot open " + path.string());
  std::string line;
  if (!std::getline(is, line) || line != "epoch,train_loss,align_loss,dev_auc") {
    throw ValidationError(path.string() + ": unexpected history header");
  }
  std::vector<EpochRecord> out;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    EpochRecord r;
    std::istringstream fields(line);
    char c1 = 0, c2 = 0, c3 = 0;
    if (!(fields >> r.epoch >> c1 >> r.train_loss >> c2 >> r.align_loss >> c3 >> r.dev_auc) || c1 != ',' ||
        c2 != ',' || c3 != ',') {
      throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": malformed history row");
    }
    out.push_back(r);
  }
  return out;
}

}  // namespace moment::train
