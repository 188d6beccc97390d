#pragma once

#include <vector>

#include "vsgnet/ops.hpp"
#include "vsgnet/params.hpp"

namespace vsg {

// Graph convolutional branch: a bipartite graph over the image's humans and
// objects, adjacency set to the pairs' interaction proposal scores (one
// stored scalar per pair, symmetric by construction). A single propagation
// round projects neighbor features across the human/object spaces and sums
// them, weighted by the adjacency; no nonlinearity follows the sum.

template <typename Real>
struct InteractionGraph {
  std::vector<Tensor<Real>> human_feats;   // H vectors of size R
  std::vector<Tensor<Real>> object_feats;  // O vectors of size R
  // adjacency[h][o], scalar tensors; gradients flow through them into
  // whatever head produced the proposal scores.
  std::vector<std::vector<Tensor<Real>>> adjacency;
};

template <typename Real>
InteractionGraph<Real> build_graph(std::vector<Tensor<Real>> human_feats,
                                   std::vector<Tensor<Real>> object_feats,
                                   std::vector<std::vector<Tensor<Real>>> proposals) {
  if (proposals.size() != human_feats.size())
    throw DataError("build_graph: proposal matrix must have one row per human");
  for (const auto& row : proposals) {
    if (row.size() != object_feats.size())
      throw DataError("build_graph: proposal row width must equal object count");
    for (const auto& s : row)
      if (s.numel() != 1)
        throw DataError("build_graph: adjacency entries must be scalars");
  }
  return InteractionGraph<Real>{std::move(human_feats), std::move(object_feats),
                                std::move(proposals)};
}

template <typename Real>
struct GraphFeatures {
  std::vector<Tensor<Real>> human;   // f'_h
  std::vector<Tensor<Real>> object;  // f'_o
};

// f'_h = f_h + sum_o alpha_ho * W_oh(f_o) and symmetrically for objects.
// Each projection is computed once per node, not once per edge.
template <typename Real>
GraphFeatures<Real> propagate(const InteractionGraph<Real>& g,
                              const LinearLayer<Real>& msg_obj_to_human,
                              const LinearLayer<Real>& msg_human_to_obj) {
  const std::size_t nh = g.human_feats.size();
  const std::size_t no = g.object_feats.size();

  std::vector<Tensor<Real>> obj_msg, hum_msg;
  obj_msg.reserve(no);
  for (const auto& f : g.object_feats) obj_msg.push_back(apply(msg_obj_to_human, f));
  hum_msg.reserve(nh);
  for (const auto& f : g.human_feats) hum_msg.push_back(apply(msg_human_to_obj, f));

  GraphFeatures<Real> out;
  out.human.reserve(nh);
  for (std::size_t h = 0; h < nh; ++h) {
    std::vector<Tensor<Real>> terms{g.human_feats[h]};
    for (std::size_t o = 0; o < no; ++o)
      terms.push_back(mul_scalar(obj_msg[o], g.adjacency[h][o]));
    out.human.push_back(add_n(terms));
  }
  out.object.reserve(no);
  for (std::size_t o = 0; o < no; ++o) {
    std::vector<Tensor<Real>> terms{g.object_feats[o]};
    for (std::size_t h = 0; h < nh; ++h)
      terms.push_back(mul_scalar(hum_msg[h], g.adjacency[h][o]));
    out.object.push_back(add_n(terms));
  }
  return out;
}

// sigma(W_graph(f'_h (+) f'_o)) for one pair.
template <typename Real>
Tensor<Real> predict_graph(const Tensor<Real>& graph_human,
                           const Tensor<Real>& graph_object,
                           const LinearLayer<Real>& graph_head) {
  return sigmoid(apply(graph_head, concat<Real>({graph_human, graph_object})));
}

}  // namespace vsg
