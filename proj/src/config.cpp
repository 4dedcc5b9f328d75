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

#include "moment/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>

#include "moment/common.hpp"

namespace moment::config {

using nlohmann::json;

namespace {

using Setter = std::function<void(const json&, const std::string&)>;

std::string join(const std::string& prefix, const std::string& key) {
  return prefix.empty() ? key : prefix + "." + key;
}

[[noreturn]] void type_error(const std::string& path, const char* expected) {
  throw ValidationError("config key '" + path + "': expected " + expected);
}

Setter size_field(std::size_t& target) {
  return [&target](const json& v, const std::string& path) {
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
      type_error(path, "a non-negative integer");
    }
    target = v.get<std::size_t>();
  };
}

Setter u64_field(std::uint64_t& target) {
  return [&target](const json& v, const std::string& path) {
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
      type_error(path, "a non-negative integer");
    }
    target = v.get<std::uint64_t>();
  };
}

Setter real_field(double& target) {
  return [&target](const json& v, const std::string& path) {
    if (!v.is_number()) type_error(path, "a number");
    target = v.get<double>();
  };
}

Setter bool_field(bool& target) {
  return [&target](const json& v, const std::string& path) {
    if (!v.is_boolean()) type_error(path, "true or false");
    target = v.get<bool>();
  };
}

void apply_object(const json& obj, const std::string& prefix, const std::map<std::string, Setter>& schema) {
  if (!obj.is_object()) type_error(prefix.empty() ? "<root>" : prefix, "an object");
  for (const auto& [key, value] : obj.items()) {
    const auto it = schema.find(key);
    if (it == schema.end()) throw ValidationError("unknown config key '" + join(prefix, key) + "'");
    it->second(value, join(prefix, key));
  }
}

void apply_encoder(const json& obj, nn::EncoderConfig& e) {
  apply_object(obj, "encoder",
               {{"d_node_feat", size_field(e.d_node_feat)},
                {"d_edge_feat", size_field(e.d_edge_feat)},
                {"d_t", size_field(e.d_t)},
                {"d_internal", size_field(e.d_internal)},
                {"d_struct", size_field(e.d_struct)},
                {"k_neighbors", size_field(e.k_neighbors)},
                {"l_behaviors", size_field(e.l_behaviors)},
                {"iota", real_field(e.iota)},
                {"heads", size_field(e.heads)},
                {"attn_ffn_hidden", size_field(e.attn_ffn_hidden)},
                {"dropout", real_field(e.dropout)},
                {"include_current_behavior", bool_field(e.include_current_behavior)}});
}

void apply_train(const json& obj, train::TrainConfig& t) {
  apply_object(obj, "train",
               {{"batch_size", size_field(t.batch_size)},
                {"max_epochs", size_field(t.max_epochs)},
                {"patience", size_field(t.patience)},
                {"lr", real_field(t.lr)},
                {"alpha", real_field(t.alpha)},
                {"decoder_hidden", size_field(t.decoder_hidden)},
                {"variant", [&t](const json& v, const std::string& path) {
                   if (!v.is_string()) type_error(path, "a string");
                   t.variant = train::parse_variant(v.get<std::string>());
                 }}});
}

void apply_synth(const json& obj, synth::SynthConfig& s) {
  apply_object(obj, "synth",
               {{"num_nodes", size_field(s.num_nodes)},
                {"num_communities", size_field(s.num_communities)},
                {"num_events", size_field(s.num_events)},
                {"feat_dim", size_field(s.feat_dim)},
                {"intra_community_edge_prob", real_field(s.intra_community_edge_prob)},
                {"rate_classes", [&s](const json& v, const std::string& path) {
                   if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
                     type_error(path, "an array of two numbers");
                   }
                   s.rate_low = v[0].get<double>();
                   s.rate_high = v[1].get<double>();
                 }},
                {"noise_sigma", real_field(s.noise_sigma)},
                {"inductive_fraction", real_field(s.inductive_fraction)},
                {"rate_match_boost", real_field(s.rate_match_boost)},
                {"rate_popularity_power", real_field(s.rate_popularity_power)},
                {"label_buckets", size_field(s.label_buckets)}});
}

}  // namespace

void RunConfig::set_seed(std::uint64_t s) {
  seed = s;
  train.seed = s;
  synth.seed = s;
}

void RunConfig::validate() const {
  train.validate();
  synth.validate();
  double total = 0.0;
  for (double r : split_ratios) {
    if (!(r > 0.0)) throw ValidationError("config key 'split': ratios must be positive");
    total += r;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ValidationError("config key 'split': ratios must sum to 1");
  if (alphas.empty()) throw ValidationError("config key 'alphas': need at least one value");
  for (double a : alphas) {
    if (!(a >= 0.0) || !std::isfinite(a)) throw ValidationError("config key 'alphas': values must be non-negative");
  }
  if (kde_grid_points < 2) throw ValidationError("config key 'kde_grid_points': need at least 2");
}

RunConfig parse_run_config(const json& doc) {
  RunConfig cfg;
  cfg.source = doc;
  std::uint64_t seed = cfg.seed;
  apply_object(doc, "",
               {{"seed", u64_field(seed)},
                {"train", [&cfg](const json& v, const std::string&) { apply_train(v, cfg.train); }},
                {"encoder", [&cfg](const json& v, const std::string&) { apply_encoder(v, cfg.train.encoder); }},
                {"synth", [&cfg](const json& v, const std::string&) { apply_synth(v, cfg.synth); }},
                {"split", [&cfg](const json& v, const std::string& path) {
                   if (!v.is_array() || v.size() != 3) type_error(path, "an array of three numbers");
                   for (std::size_t i = 0; i < 3; ++i) {
                     if (!v[i].is_number()) type_error(path, "an array of three numbers");
                     cfg.split_ratios[i] = v[i].get<double>();
                   }
                 }},
                {"alphas", [&cfg](const json& v, const std::string& path) {
                   if (!v.is_array()) type_error(path, "an array of numbers");
                   cfg.alphas.clear();
                   for (const json& a : v) {
                     if (!a.is_number()) type_error(path, "an array of numbers");
                     cfg.alphas.push_back(a.get<double>());
                   }
                 }},
                {"edge_class_epochs", size_field(cfg.edge_class_epochs)},
                {"kde_grid_points", size_field(cfg.kde_grid_points)}});
  cfg.set_seed(seed);
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ValidationError("cannot open config " + path.string());
  json doc;
  try {
    doc = json::parse(is);
  } catch (const json::parse_error& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  return parse_run_config(doc);
}

json effective_config(const RunConfig& c) {
  const nn::EncoderConfig& e = c.train.encoder;
  const synth::SynthConfig& s = c.synth;
  return json{
      {"seed", c.seed},
      {"train",
       {{"batch_size", c.train.batch_size},
        {"max_epochs", c.train.max_epochs},
        {"patience", c.train.patience},
        {"lr", c.train.lr},
        {"alpha", c.train.alpha},
        {"decoder_hidden", c.train.decoder_hidden},
        {"variant", train::variant_name(c.train.variant)}}},
      {"encoder",
       {{"d_node_feat", e.d_node_feat},
        {"d_edge_feat", e.d_edge_feat},
        {"d_t", e.d_t},
        {"d_internal", e.d_internal},
        {"d_struct", e.d_struct},
        {"k_neighbors", e.k_neighbors},
        {"l_behaviors", e.l_behaviors},
        {"iota", e.iota},
        {"heads", e.heads},
        {"attn_ffn_hidden", e.attn_ffn_hidden},
        {"dropout", e.dropout},
        {"include_current_behavior", e.include_current_behavior}}},
      {"synth",
       {{"num_nodes", s.num_nodes},
        {"num_communities", s.num_communities},
        {"num_events", s.num_events},
        {"feat_dim", s.feat_dim},
        {"intra_community_edge_prob", s.intra_community_edge_prob},
        {"rate_classes", {s.rate_low, s.rate_high}},
        {"noise_sigma", s.noise_sigma},
        {"inductive_fraction", s.inductive_fraction},
        {"rate_match_boost", s.rate_match_boost},
        {"rate_popularity_power", s.rate_popularity_power},
        {"label_buckets", s.label_buckets}}},
      {"split", c.split_ratios},
      {"alphas", c.alphas},
      {"edge_class_epochs", c.edge_class_epochs},
      {"kde_grid_points", c.kde_grid_points}};
}

std::string content_hash(const std::vector<std::filesystem::path>& files) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (const auto& path : files) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ValidationError("cannot open " + path.string() + " for hashing");
    char buf[1 << 14];
    while (is.read(buf, sizeof buf) || is.gcount() > 0) {
      for (std::streamsize i = 0; i < is.gcount(); ++i) {
        h ^= static_cast<unsigned char>(buf[i]);
        h *= 0x100000001B3ULL;
      }
    }
  }
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
  return hex;
}

}  // namespace moment::config
