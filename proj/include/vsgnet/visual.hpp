#pragma once

#include "vsgnet/ops.hpp"
#include "vsgnet/params.hpp"

namespace vsg {

// Visual branch: per-entity feature extraction and pairwise fusion. Entity
// and context vectors are pair-independent and meant to be computed once per
// image (see head.hpp).

// GAP(Res(RoI(F, box))) with the entity-specific residual block.
template <typename Real>
Tensor<Real> entity_features(const Tensor<Real>& feature_map, const Box& box,
                             const ResidualBlockParams<Real>& res, int roi_size) {
  return global_average_pool(
      residual_block(roi_pool(feature_map, box, roi_size, roi_size), res));
}

// Whole-image variant: GAP(Res(F)), no RoI.
template <typename Real>
Tensor<Real> context_features(const Tensor<Real>& feature_map,
                              const ResidualBlockParams<Real>& res) {
  return global_average_pool(residual_block(feature_map, res));
}

// Projects the concatenated (human, object, context) vectors into the pair
// space, ReLU'd like every projection feeding the attention multiply.
template <typename Real>
Tensor<Real> fuse_visual(const Tensor<Real>& f_human, const Tensor<Real>& f_object,
                         const Tensor<Real>& f_context, const LinearLayer<Real>& fuse) {
  return relu(apply(fuse, concat<Real>({f_human, f_object, f_context})));
}

template <typename Real>
struct BasePrediction {
  Tensor<Real> proposal;  // scalar interaction score
  Tensor<Real> actions;   // size A
};

// Base-model heads used by the visual-only and visual+graph configurations:
// interaction score and class probabilities straight off the fused visual
// feature.
template <typename Real>
BasePrediction<Real> base_model_predict(const Tensor<Real>& f_vis,
                                        const LinearLayer<Real>& action_head,
                                        const LinearLayer<Real>& proposal_head) {
  return BasePrediction<Real>{sigmoid(apply(proposal_head, f_vis)),
                              sigmoid(apply(action_head, f_vis))};
}

}  // namespace vsg
