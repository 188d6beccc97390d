#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "vsgnet/config.hpp"
#include "vsgnet/ops.hpp"
#include "vsgnet/tensor.hpp"

namespace vsg {

template <typename Real>
struct LinearLayer {
  Tensor<Real> weight;  // [out, in]
  Tensor<Real> bias;    // [out]
};

template <typename Real>
struct ConvLayer {
  Tensor<Real> weight;  // [out, in, k, k]
  Tensor<Real> bias;    // [out]
  int stride = 1;
  int pad = 0;
};

// Shape-preserving block: ReLU(x + ConvPath(x)) with ConvPath being two
// conv+ReLU stages at stride 1 and same-channel output.
template <typename Real>
struct ResidualBlockParams {
  ConvLayer<Real> conv1;
  ConvLayer<Real> conv2;
};

template <typename Real>
Tensor<Real> apply(const LinearLayer<Real>& l, const Tensor<Real>& x) {
  return fully_connected(x, l.weight, l.bias);
}

template <typename Real>
Tensor<Real> apply(const ConvLayer<Real>& l, const Tensor<Real>& x) {
  return conv2d(x, l.weight, l.bias, l.stride, l.pad);
}

template <typename Real>
Tensor<Real> residual_block(const Tensor<Real>& x,
                            const ResidualBlockParams<Real>& block) {
  auto path = relu(apply(block.conv2, relu(apply(block.conv1, x))));
  return relu(add(x, path));
}

// Every learnable weight of the three branches plus the base-model heads.
template <typename Real>
struct ModelParams {
  // visual branch
  ResidualBlockParams<Real> res_human, res_object, res_context;
  LinearLayer<Real> fuse;           // [D, 3R]
  LinearLayer<Real> base_action;    // [A, D], base-model classifier
  LinearLayer<Real> base_proposal;  // [1, D], base-model interaction head
  // spatial attention branch
  ConvLayer<Real> spat_conv1, spat_conv2;
  LinearLayer<Real> spat_proj;   // [D, c2]
  LinearLayer<Real> att_action;  // [A, D]
  LinearLayer<Real> proposal;    // [1, D], interaction proposal head
  LinearLayer<Real> ref_action;  // [A, D]
  // graph branch
  LinearLayer<Real> msg_obj_to_human;  // [R, R]
  LinearLayer<Real> msg_human_to_obj;  // [R, R]
  LinearLayer<Real> graph_action;      // [A, 2R]
};

namespace detail {

template <typename Real>
LinearLayer<Real> make_linear(int out, int in) {
  LinearLayer<Real> l;
  l.weight = Tensor<Real>(Shape{out, in});
  l.bias = Tensor<Real>(Shape{out});
  return l;
}

template <typename Real>
ConvLayer<Real> make_conv(int out, int in, int k, int stride, int pad) {
  ConvLayer<Real> c;
  c.weight = Tensor<Real>(Shape{out, in, k, k});
  c.bias = Tensor<Real>(Shape{out});
  c.stride = stride;
  c.pad = pad;
  return c;
}

template <typename Real>
ResidualBlockParams<Real> make_residual(int channels, int k, int pad) {
  ResidualBlockParams<Real> r;
  r.conv1 = make_conv<Real>(channels, channels, k, 1, pad);
  r.conv2 = make_conv<Real>(channels, channels, k, 1, pad);
  return r;
}

}  // namespace detail

// Zero-valued parameter set with the shapes implied by the config.
template <typename Real>
ModelParams<Real> make_params(const ModelConfig& cfg) {
  validate(cfg);
  const int r = cfg.entity_dim();
  const int d = cfg.pair_dim;
  const int a = cfg.num_actions;
  ModelParams<Real> p;
  p.res_human = detail::make_residual<Real>(r, cfg.residual_kernel, cfg.residual_pad());
  p.res_object = detail::make_residual<Real>(r, cfg.residual_kernel, cfg.residual_pad());
  p.res_context = detail::make_residual<Real>(r, cfg.residual_kernel, cfg.residual_pad());
  p.fuse = detail::make_linear<Real>(d, 3 * r);
  p.base_action = detail::make_linear<Real>(a, d);
  p.base_proposal = detail::make_linear<Real>(1, d);
  p.spat_conv1 = detail::make_conv<Real>(cfg.spatial_channels1, 2, cfg.spatial_kernel,
                                         cfg.spatial_stride, cfg.spatial_pad());
  p.spat_conv2 = detail::make_conv<Real>(cfg.spatial_channels2, cfg.spatial_channels1,
                                         cfg.spatial_kernel, cfg.spatial_stride,
                                         cfg.spatial_pad());
  p.spat_proj = detail::make_linear<Real>(d, cfg.spatial_channels2);
  p.att_action = detail::make_linear<Real>(a, d);
  p.proposal = detail::make_linear<Real>(1, d);
  p.ref_action = detail::make_linear<Real>(a, d);
  p.msg_obj_to_human = detail::make_linear<Real>(r, r);
  p.msg_human_to_obj = detail::make_linear<Real>(r, r);
  p.graph_action = detail::make_linear<Real>(a, 2 * r);
  return p;
}

// Stable name -> tensor registry. Checkpoints, the optimizer, and the
// lr-schedule filters all key off these names.
template <typename Real>
std::vector<std::pair<std::string, Tensor<Real>>> named_params(ModelParams<Real>& p) {
  std::vector<std::pair<std::string, Tensor<Real>>> out;
  auto lin = [&out](const std::string& name, LinearLayer<Real>& l) {
    out.emplace_back(name + ".weight", l.weight);
    out.emplace_back(name + ".bias", l.bias);
  };
  auto conv = [&out](const std::string& name, ConvLayer<Real>& c) {
    out.emplace_back(name + ".weight", c.weight);
    out.emplace_back(name + ".bias", c.bias);
  };
  auto res = [&conv](const std::string& name, ResidualBlockParams<Real>& r) {
    conv(name + ".conv1", r.conv1);
    conv(name + ".conv2", r.conv2);
  };
  res("visual.res_human", p.res_human);
  res("visual.res_object", p.res_object);
  res("visual.res_context", p.res_context);
  lin("visual.fuse", p.fuse);
  lin("visual.base_action", p.base_action);
  lin("visual.base_proposal", p.base_proposal);
  conv("spatial.conv1", p.spat_conv1);
  conv("spatial.conv2", p.spat_conv2);
  lin("spatial.proj", p.spat_proj);
  lin("spatial.att_action", p.att_action);
  lin("spatial.proposal", p.proposal);
  lin("spatial.ref_action", p.ref_action);
  lin("graph.msg_obj_to_human", p.msg_obj_to_human);
  lin("graph.msg_human_to_obj", p.msg_human_to_obj);
  lin("graph.action", p.graph_action);
  return out;
}

// Parameter names that take part in a branch configuration. The base-model
// heads stand in for the spatial proposal/classifier when that branch is off.
inline bool param_active(const std::string& name, Ablation ab) {
  const bool is_spatial = name.rfind("spatial.", 0) == 0;
  const bool is_graph = name.rfind("graph.", 0) == 0;
  const bool is_base = name.rfind("visual.base_", 0) == 0;
  switch (ab) {
    case Ablation::kVisual: return !is_spatial && !is_graph;
    case Ablation::kVisualGraph: return !is_spatial;
    case Ablation::kVisualSpatial: return !is_graph && !is_base;
    case Ablation::kFull: return !is_base;
  }
  return true;
}

// Kaiming-style uniform fan-in init for weights, zero biases; marks every
// parameter as requiring grad.
template <typename Real>
void init_params(ModelParams<Real>& p, std::uint64_t seed) {
  Rng rng(seed ^ 0x5EEDBA5EDULL);
  auto named = named_params(p);
  for (auto& [name, t] : named) {
    t.set_requires_grad(true);
    if (name.size() >= 5 && name.compare(name.size() - 5, 5, ".bias") == 0) continue;
    const auto& s = t.shape();
    std::size_t fan_in = 1;
    for (std::size_t i = 1; i < s.size(); ++i) fan_in *= static_cast<std::size_t>(s[i]);
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (auto& v : t.values()) v = static_cast<Real>(rng.uniform(-bound, bound));
  }
}

template <typename Real>
void zero_all_grads(ModelParams<Real>& p) {
  for (auto& [name, t] : named_params(p)) t.zero_grad();
}

}  // namespace vsg
