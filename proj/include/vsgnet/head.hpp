#pragma once

#include <vector>

#include "vsgnet/config.hpp"
#include "vsgnet/data.hpp"
#include "vsgnet/eval.hpp"
#include "vsgnet/graph.hpp"
#include "vsgnet/spatial.hpp"
#include "vsgnet/visual.hpp"

namespace vsg {

struct PairCandidate {
  int human = 0;   // index into record.humans
  int object = 0;  // index into record.objects
};

// All detections passing the confidence thresholds, paired exhaustively in
// (human, object) order.
template <typename Real>
std::vector<PairCandidate> enumerate_pairs(const ImageRecord<Real>& rec,
                                           const HeadConfig& cfg) {
  std::vector<PairCandidate> out;
  for (int h = 0; h < static_cast<int>(rec.humans.size()); ++h) {
    if (rec.humans[static_cast<std::size_t>(h)].score < cfg.human_threshold) continue;
    for (int o = 0; o < static_cast<int>(rec.objects.size()); ++o) {
      if (rec.objects[static_cast<std::size_t>(o)].score < cfg.object_threshold)
        continue;
      out.push_back(PairCandidate{h, o});
    }
  }
  return out;
}

// Per-pair intermediates. Which tensors are populated depends on the branch
// configuration; `fused` always holds the final per-action probabilities
// before detector-confidence/LIS modulation.
template <typename Real>
struct PairState {
  int human_index = 0;
  int object_index = 0;
  Tensor<Real> f_vis;
  Tensor<Real> config_map;
  Tensor<Real> attention;
  Tensor<Real> f_ref;
  Tensor<Real> proposal;  // scalar interaction score i
  Tensor<Real> p_att, p_ref, p_graph, p_base;
  Tensor<Real> graph_human, graph_object;  // this pair's f'_h, f'_o
  Tensor<Real> fused;  // size A
};

template <typename Real>
struct ImageForward {
  std::vector<int> human_ids, object_ids;  // surviving detections
  std::vector<Tensor<Real>> human_feats, object_feats;
  Tensor<Real> context;
  std::vector<PairState<Real>> pairs;  // human-major order over survivors
};

// Runs the configured branches for every candidate pair of one image.
// Entity and context features are computed once per image and shared by all
// pairs; the graph branch consumes the full proposal matrix as adjacency.
template <typename Real>
ImageForward<Real> forward_image(const ImageRecord<Real>& rec,
                                 const ModelParams<Real>& params,
                                 const ModelConfig& model, const HeadConfig& head) {
  ImageForward<Real> out;
  const auto candidates = enumerate_pairs(rec, head);
  if (candidates.empty()) return out;

  for (const auto& c : candidates) {
    if (out.human_ids.empty() || out.human_ids.back() != c.human)
      out.human_ids.push_back(c.human);
  }
  for (const auto& c : candidates) {
    if (c.human == out.human_ids.front()) out.object_ids.push_back(c.object);
  }
  const int nh = static_cast<int>(out.human_ids.size());
  const int no = static_cast<int>(out.object_ids.size());

  for (const int h : out.human_ids)
    out.human_feats.push_back(entity_features(
        rec.feature, rec.humans[static_cast<std::size_t>(h)].box, params.res_human,
        model.roi_size));
  for (const int o : out.object_ids)
    out.object_feats.push_back(entity_features(
        rec.feature, rec.objects[static_cast<std::size_t>(o)].box, params.res_object,
        model.roi_size));
  out.context = context_features(rec.feature, params.res_context);

  const bool spatial_on = head.ablation == Ablation::kVisualSpatial ||
                          head.ablation == Ablation::kFull;
  const bool graph_on = head.ablation == Ablation::kVisualGraph ||
                        head.ablation == Ablation::kFull;

  out.pairs.resize(static_cast<std::size_t>(nh) * no);
  for (int hi = 0; hi < nh; ++hi) {
    for (int oi = 0; oi < no; ++oi) {
      PairState<Real>& pair = out.pairs[static_cast<std::size_t>(hi) * no + oi];
      pair.human_index = out.human_ids[static_cast<std::size_t>(hi)];
      pair.object_index = out.object_ids[static_cast<std::size_t>(oi)];
      pair.f_vis = fuse_visual(out.human_feats[static_cast<std::size_t>(hi)],
                               out.object_feats[static_cast<std::size_t>(oi)],
                               out.context, params.fuse);
      if (spatial_on) {
        pair.config_map = rasterize<Real>(
            rec.humans[static_cast<std::size_t>(pair.human_index)].box,
            rec.objects[static_cast<std::size_t>(pair.object_index)].box,
            model.spatial_map_size);
        pair.attention = attention_vector(pair.config_map, params);
        pair.f_ref = refine(pair.f_vis, pair.attention);
        pair.proposal = interaction_proposal(pair.f_ref, params.proposal);
        pair.p_att = predict_att(pair.attention, params.att_action);
        pair.p_ref = predict_ref(pair.f_ref, params.ref_action);
      } else {
        auto base = base_model_predict(pair.f_vis, params.base_action,
                                       params.base_proposal);
        pair.proposal = base.proposal;
        pair.p_base = base.actions;
      }
    }
  }

  if (graph_on) {
    std::vector<std::vector<Tensor<Real>>> adjacency(static_cast<std::size_t>(nh));
    for (int hi = 0; hi < nh; ++hi) {
      adjacency[static_cast<std::size_t>(hi)].resize(static_cast<std::size_t>(no));
      for (int oi = 0; oi < no; ++oi)
        adjacency[static_cast<std::size_t>(hi)][static_cast<std::size_t>(oi)] =
            out.pairs[static_cast<std::size_t>(hi) * no + oi].proposal;
    }
    auto graph = build_graph(out.human_feats, out.object_feats, std::move(adjacency));
    auto features = propagate(graph, params.msg_obj_to_human, params.msg_human_to_obj);
    for (int hi = 0; hi < nh; ++hi)
      for (int oi = 0; oi < no; ++oi) {
        PairState<Real>& pair = out.pairs[static_cast<std::size_t>(hi) * no + oi];
        pair.graph_human = features.human[static_cast<std::size_t>(hi)];
        pair.graph_object = features.object[static_cast<std::size_t>(oi)];
        pair.p_graph = predict_graph(pair.graph_human, pair.graph_object,
                                     params.graph_action);
      }
  }

  // Fusion: the product of the active branch predictions, always weighted by
  // the interaction proposal score.
  for (auto& pair : out.pairs) {
    switch (head.ablation) {
      case Ablation::kVisual:
        pair.fused = mul_scalar(pair.p_base, pair.proposal);
        break;
      case Ablation::kVisualGraph:
        pair.fused = mul_scalar(mul(pair.p_base, pair.p_graph), pair.proposal);
        break;
      case Ablation::kVisualSpatial:
        pair.fused = mul_scalar(mul(pair.p_att, pair.p_ref), pair.proposal);
        break;
      case Ablation::kFull:
        pair.fused = mul_scalar(mul(mul(pair.p_att, pair.p_ref), pair.p_graph),
                                pair.proposal);
        break;
    }
  }
  return out;
}

// Low-grade instance suppression: monotone sigmoid-shaped rescaling of a
// detector confidence, output in [0, T].
inline double lis(double score, const LisConfig& cfg) {
  if (score < 0.0 || score > 1.0)
    throw DataError("lis: detector score must lie in [0,1]");
  return cfg.T / (1.0 + std::exp(cfg.k - cfg.w * score));
}

// Final per-action detection scores for one pair: fused probability times
// the LIS-rescaled detector confidences, with actions incompatible with the
// object's class zeroed out.
template <typename Real>
std::vector<double> final_scores(const PairState<Real>& pair, double human_score,
                                 double object_score, int object_class,
                                 const CompatibilityTable& compat,
                                 const HeadConfig& cfg) {
  const double det = lis(human_score, cfg.lis) * lis(object_score, cfg.lis);
  std::vector<double> out(pair.fused.numel());
  for (std::size_t a = 0; a < out.size(); ++a) {
    if (cfg.compatibility_filter && !compat.empty() &&
        !compat.allows(static_cast<int>(a), object_class)) {
      out[a] = 0.0;
      continue;
    }
    out[a] = static_cast<double>(pair.fused[a]) * det;
  }
  return out;
}

// Inference over one image: every candidate pair scored for every action.
template <typename Real>
std::vector<ScoredTriplet> infer_image(const ImageRecord<Real>& rec,
                                       const ModelParams<Real>& params,
                                       const ModelConfig& model,
                                       const HeadConfig& head,
                                       const CompatibilityTable& compat) {
  std::vector<ScoredTriplet> out;
  const auto fwd = forward_image(rec, params, model, head);
  for (const auto& pair : fwd.pairs) {
    const auto& human = rec.humans[static_cast<std::size_t>(pair.human_index)];
    const auto& object = rec.objects[static_cast<std::size_t>(pair.object_index)];
    const auto scores =
        final_scores(pair, human.score, object.score, object.class_id, compat, head);
    for (std::size_t a = 0; a < scores.size(); ++a)
      out.push_back(ScoredTriplet{rec.id, human.box, object.box,
                                  static_cast<int>(a), scores[a]});
  }
  return out;
}

}  // namespace vsg
