#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "vsgnet/common.hpp"

namespace vsg {

using Json = nlohmann::json;

// The four branch configurations the head can run.
enum class Ablation { kVisual, kVisualGraph, kVisualSpatial, kFull };

inline std::string to_string(Ablation a) {
  switch (a) {
    case Ablation::kVisual: return "visual";
    case Ablation::kVisualGraph: return "visual+graph";
    case Ablation::kVisualSpatial: return "visual+spatial";
    case Ablation::kFull: return "full";
  }
  return "full";
}

inline Ablation parse_ablation(const std::string& s) {
  if (s == "visual") return Ablation::kVisual;
  if (s == "visual+graph") return Ablation::kVisualGraph;
  if (s == "visual+spatial") return Ablation::kVisualSpatial;
  if (s == "full") return Ablation::kFull;
  throw UsageError("unknown ablation '" + s +
                   "' (expected visual|visual+graph|visual+spatial|full)");
}

struct ModelConfig {
  int feature_channels = 1024;  // backbone channels C; entity vectors share it
  int pair_dim = 512;           // size of the fused pair space
  int num_actions = 1;
  int roi_size = 10;
  int residual_kernel = 3;
  int spatial_map_size = 64;
  int spatial_kernel = 5;
  int spatial_stride = 2;
  int spatial_channels1 = 64;
  int spatial_channels2 = 32;

  int entity_dim() const { return feature_channels; }
  int residual_pad() const { return residual_kernel / 2; }
  int spatial_pad() const { return spatial_kernel / 2; }
};

struct LisConfig {
  double T = 8.3;
  double k = 12.0;
  double w = 10.0;
};

struct HeadConfig {
  double human_threshold = 0.6;
  double object_threshold = 0.3;
  LisConfig lis;
  bool compatibility_filter = true;
  Ablation ablation = Ablation::kFull;
};

// Per-epoch-range learning-rate override. `params` selects a parameter-name
// prefix; a leading '!' inverts the match (e.g. "!spatial." is every layer
// outside the spatial attention branch). Epoch range is half-open [from, to).
struct LrRule {
  int from_epoch = 0;
  int to_epoch = 0;
  double lr = 0.0;
  std::string params;
};

struct TrainConfig {
  double lr = 0.01;
  int batch_size = 8;  // images per step
  double momentum = 0.9;
  double weight_decay = 1e-4;
  int epochs = 50;
  std::vector<LrRule> lr_schedule;
  std::uint64_t seed = 0;
  int checkpoint_every = 0;  // 0: final checkpoint only
};

struct EngineConfig {
  ModelConfig model;
  TrainConfig train;
  HeadConfig head;
};

inline void validate(const ModelConfig& m) {
  if (m.feature_channels < 1 || m.pair_dim < 1 || m.num_actions < 1 ||
      m.roi_size < 1 || m.spatial_map_size < 1 || m.spatial_channels1 < 1 ||
      m.spatial_channels2 < 1)
    throw DataError("model config: all dimensions must be positive");
  if (m.residual_kernel < 1 || m.residual_kernel % 2 == 0)
    throw DataError("model config: residual kernel must be odd");
  if (m.spatial_kernel < 1 || m.spatial_stride < 1)
    throw DataError("model config: bad spatial conv parameters");
}

inline void validate(const TrainConfig& t) {
  if (t.lr <= 0.0) throw DataError("train config: lr must be > 0");
  if (t.batch_size < 1) throw DataError("train config: batch_size must be >= 1");
  if (t.momentum < 0.0 || t.momentum >= 1.0)
    throw DataError("train config: momentum must be in [0,1)");
  if (t.weight_decay < 0.0) throw DataError("train config: weight_decay must be >= 0");
  if (t.epochs < 0) throw DataError("train config: epochs must be >= 0");
}

inline void validate(const HeadConfig& h) {
  if (h.human_threshold < 0.0 || h.human_threshold > 1.0 ||
      h.object_threshold < 0.0 || h.object_threshold > 1.0)
    throw DataError("head config: thresholds must be in [0,1]");
}

inline void validate(const EngineConfig& c) {
  validate(c.model);
  validate(c.train);
  validate(c.head);
}

inline Json to_json(const ModelConfig& m) {
  return Json{{"feature_channels", m.feature_channels},
              {"pair_dim", m.pair_dim},
              {"num_actions", m.num_actions},
              {"roi_size", m.roi_size},
              {"residual_kernel", m.residual_kernel},
              {"spatial_map_size", m.spatial_map_size},
              {"spatial_kernel", m.spatial_kernel},
              {"spatial_stride", m.spatial_stride},
              {"spatial_channels1", m.spatial_channels1},
              {"spatial_channels2", m.spatial_channels2}};
}

inline Json to_json(const TrainConfig& t) {
  Json rules = Json::array();
  for (const auto& r : t.lr_schedule)
    rules.push_back(Json{{"from_epoch", r.from_epoch},
                         {"to_epoch", r.to_epoch},
                         {"lr", r.lr},
                         {"params", r.params}});
  return Json{{"lr", t.lr},
              {"batch_size", t.batch_size},
              {"momentum", t.momentum},
              {"weight_decay", t.weight_decay},
              {"epochs", t.epochs},
              {"lr_schedule", rules},
              {"seed", t.seed},
              {"checkpoint_every", t.checkpoint_every}};
}

inline Json to_json(const HeadConfig& h) {
  return Json{{"human_threshold", h.human_threshold},
              {"object_threshold", h.object_threshold},
              {"lis", Json{{"T", h.lis.T}, {"k", h.lis.k}, {"w", h.lis.w}}},
              {"compatibility_filter", h.compatibility_filter},
              {"ablation", to_string(h.ablation)}};
}

inline Json to_json(const EngineConfig& c) {
  return Json{{"model", to_json(c.model)},
              {"train", to_json(c.train)},
              {"head", to_json(c.head)}};
}

// Partial-object merges: fields present in `j` override `m`, everything else
// keeps its current value.
inline void merge_json(ModelConfig& m, const Json& j) {
  m.feature_channels = j.value("feature_channels", m.feature_channels);
  m.pair_dim = j.value("pair_dim", m.pair_dim);
  m.num_actions = j.value("num_actions", m.num_actions);
  m.roi_size = j.value("roi_size", m.roi_size);
  m.residual_kernel = j.value("residual_kernel", m.residual_kernel);
  m.spatial_map_size = j.value("spatial_map_size", m.spatial_map_size);
  m.spatial_kernel = j.value("spatial_kernel", m.spatial_kernel);
  m.spatial_stride = j.value("spatial_stride", m.spatial_stride);
  m.spatial_channels1 = j.value("spatial_channels1", m.spatial_channels1);
  m.spatial_channels2 = j.value("spatial_channels2", m.spatial_channels2);
}

inline void merge_json(TrainConfig& t, const Json& j) {
  t.lr = j.value("lr", t.lr);
  t.batch_size = j.value("batch_size", t.batch_size);
  t.momentum = j.value("momentum", t.momentum);
  t.weight_decay = j.value("weight_decay", t.weight_decay);
  t.epochs = j.value("epochs", t.epochs);
  t.seed = j.value("seed", t.seed);
  t.checkpoint_every = j.value("checkpoint_every", t.checkpoint_every);
  if (j.contains("lr_schedule")) {
    t.lr_schedule.clear();
    for (const auto& r : j.at("lr_schedule")) {
      LrRule rule;
      rule.from_epoch = r.at("from_epoch").get<int>();
      rule.to_epoch = r.at("to_epoch").get<int>();
      rule.lr = r.at("lr").get<double>();
      rule.params = r.value("params", std::string());
      t.lr_schedule.push_back(rule);
    }
  }
}

inline void merge_json(HeadConfig& h, const Json& j) {
  h.human_threshold = j.value("human_threshold", h.human_threshold);
  h.object_threshold = j.value("object_threshold", h.object_threshold);
  h.compatibility_filter = j.value("compatibility_filter", h.compatibility_filter);
  if (j.contains("lis")) {
    const auto& l = j.at("lis");
    h.lis.T = l.value("T", h.lis.T);
    h.lis.k = l.value("k", h.lis.k);
    h.lis.w = l.value("w", h.lis.w);
  }
  if (j.contains("ablation")) h.ablation = parse_ablation(j.at("ablation").get<std::string>());
}

inline void merge_json(EngineConfig& c, const Json& j) {
  if (j.contains("model")) merge_json(c.model, j.at("model"));
  if (j.contains("train")) merge_json(c.train, j.at("train"));
  if (j.contains("head")) merge_json(c.head, j.at("head"));
}

inline EngineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config file: " + path);
  Json j;
  try {
    in >> j;
  } catch (const Json::exception& e) {
    throw DataError("config file " + path + ": " + e.what());
  }
  EngineConfig cfg;
  merge_json(cfg, j);
  validate(cfg);
  return cfg;
}

inline std::uint64_t config_hash(const EngineConfig& c) {
  return fnv1a(to_json(c).dump());
}

}  // namespace vsg
