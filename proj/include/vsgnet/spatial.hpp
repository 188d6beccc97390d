#pragma once

#include "vsgnet/ops.hpp"
#include "vsgnet/params.hpp"

namespace vsg {

// Spatial attention branch: a two-channel binary raster of the pair's box
// footprints is pushed through two convolutions, pooled, and projected into
// the pair space; the result gates the visual features elementwise and
// feeds the interaction-proposal and classification heads.

// Binary configuration map, channel 0 = human, channel 1 = object. A cell is
// set iff its center lies inside the box; a box covering no cell center is
// expanded to the single cell containing its center.
template <typename Real>
Tensor<Real> rasterize(const Box& human, const Box& object, int map_size) {
  if (!human.well_formed() || !object.well_formed())
    throw DataError("rasterize: boxes must be well-formed");
  Tensor<Real> map(Shape{2, map_size, map_size});
  const Box boxes[2] = {clip_box(human), clip_box(object)};
  for (int ch = 0; ch < 2; ++ch) {
    const Box& b = boxes[ch];
    Real* base = map.data() + static_cast<std::size_t>(ch) * map_size * map_size;
    bool any = false;
    for (int r = 0; r < map_size; ++r) {
      const double cy = (r + 0.5) / map_size;
      if (cy < b.y1 || cy >= b.y2) continue;
      for (int c = 0; c < map_size; ++c) {
        const double cx = (c + 0.5) / map_size;
        if (cx >= b.x1 && cx < b.x2) {
          base[static_cast<std::size_t>(r) * map_size + c] = Real(1);
          any = true;
        }
      }
    }
    if (!any) {
      const int r = std::clamp(static_cast<int>(b.center_y() * map_size), 0, map_size - 1);
      const int c = std::clamp(static_cast<int>(b.center_x() * map_size), 0, map_size - 1);
      base[static_cast<std::size_t>(r) * map_size + c] = Real(1);
    }
  }
  return map;
}

// a = ReLU(W_spat(GAP(conv2(ReLU(conv1(B)))))), ReLU after each stage.
template <typename Real>
Tensor<Real> attention_vector(const Tensor<Real>& config_map,
                              const ModelParams<Real>& p) {
  auto x = relu(apply(p.spat_conv1, config_map));
  x = relu(apply(p.spat_conv2, x));
  return relu(apply(p.spat_proj, global_average_pool(x)));
}

// Elementwise refinement of the visual features by the attention vector.
template <typename Real>
Tensor<Real> refine(const Tensor<Real>& f_vis, const Tensor<Real>& attention) {
  return mul(f_vis, attention);
}

// Interaction proposal score, scalar in (0,1).
template <typename Real>
Tensor<Real> interaction_proposal(const Tensor<Real>& f_ref,
                                  const LinearLayer<Real>& proposal_head) {
  return sigmoid(apply(proposal_head, f_ref));
}

// Auxiliary class prediction from the attention vector alone.
template <typename Real>
Tensor<Real> predict_att(const Tensor<Real>& attention,
                         const LinearLayer<Real>& att_head) {
  return sigmoid(apply(att_head, attention));
}

// Class prediction from the refined features.
template <typename Real>
Tensor<Real> predict_ref(const Tensor<Real>& f_ref,
                         const LinearLayer<Real>& ref_head) {
  return sigmoid(apply(ref_head, f_ref));
}

}  // namespace vsg
